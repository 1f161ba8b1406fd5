"""Pure-Python/numpy fallback for the hot kernels.

Same API and bit-for-bit identical results as the compiled extension
(`expertq.kernels._compiled`): the bitboard routines are exact integer math,
and the im2col/col2im pair only moves floats around (the accumulation order
in col2im matches the compiled loop ordering).

Bitboards are 64-bit integers, bit ``row * 8 + col`` with row 0 at the top.
Activations are channels-last: ``(N, H, W, C)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

U64 = 0xFFFFFFFFFFFFFFFF
NOT_COL0 = 0xFEFEFEFEFEFEFEFE  # clears column 0 (west edge)
NOT_COL7 = 0x7F7F7F7F7F7F7F7F  # clears column 7 (east edge)


def _east(b: int) -> int:
    return ((b & NOT_COL7) << 1) & U64


def _west(b: int) -> int:
    return (b & NOT_COL0) >> 1


def _south(b: int) -> int:
    return (b << 8) & U64


def _north(b: int) -> int:
    return b >> 8


def _south_east(b: int) -> int:
    return ((b & NOT_COL7) << 9) & U64


def _south_west(b: int) -> int:
    return ((b & NOT_COL0) << 7) & U64


def _north_east(b: int) -> int:
    return (b & NOT_COL7) >> 7


def _north_west(b: int) -> int:
    return (b & NOT_COL0) >> 9


_SHIFTS = (_east, _west, _south, _north, _south_east, _south_west, _north_east, _north_west)


def legal_mask(own: int, opp: int) -> int:
    """Bitboard of squares where ``own`` has a flipping placement."""
    empty = ~(own | opp) & U64
    legal = 0
    for shift in _SHIFTS:
        t = shift(own) & opp
        for _ in range(5):
            t |= shift(t) & opp
        legal |= shift(t) & empty
    return legal


def flips_mask(own: int, opp: int, sq: int) -> int:
    """Bitboard of opponent pieces flipped by ``own`` placing at ``sq``.

    Returns 0 if the placement flips nothing (i.e. the move is illegal).
    Occupied target squares also return 0.
    """
    pos = 1 << sq
    if (own | opp) & pos:
        return 0
    flips = 0
    for shift in _SHIFTS:
        run = 0
        cur = shift(pos)
        while cur & opp:
            run |= cur
            cur = shift(cur)
        if run and (cur & own):
            flips |= run
    return flips


def im2col(x: np.ndarray, kh: int, kw: int, pad: int) -> np.ndarray:
    """Gather sliding ``kh x kw`` patches of ``x`` (N, H, W, C), stride 1.

    Returns a contiguous ``(N*OH*OW, kh*kw*C)`` matrix; out-of-bounds taps
    (when ``pad > 0``) read as zero.
    """
    n, h, w, c = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    hp, wp = h + 2 * pad, w + 2 * pad
    oh, ow = hp - kh + 1, wp - kw + 1
    s = x.strides
    view = as_strided(x, (n, oh, ow, kh, kw, c), (s[0], s[1], s[2], s[1], s[2], s[3]))
    return np.ascontiguousarray(view).reshape(n * oh * ow, kh * kw * c)


def col2im(dcols: np.ndarray, n: int, h: int, w: int, c: int, kh: int, kw: int, pad: int) -> np.ndarray:
    """Scatter-add adjoint of :func:`im2col`; returns ``(n, h, w, c)``."""
    hp, wp = h + 2 * pad, w + 2 * pad
    oh, ow = hp - kh + 1, wp - kw + 1
    d6 = dcols.reshape(n, oh, ow, kh, kw, c)
    dxp = np.zeros((n, hp, wp, c), dtype=dcols.dtype)
    # (i, j) ascending: the compiled kernel accumulates in the same order,
    # keeping both paths bit-identical.
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + oh, j : j + ow, :] += d6[:, :, :, i, j, :]
    if pad:
        return np.ascontiguousarray(dxp[:, pad : pad + h, pad : pad + w, :])
    return dxp
