# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Othello bitboard ops and im2col/col2im.

Must return bit-for-bit the same results as ``expertq.kernels.pure``;
the equivalence is enforced by tests/test_kernels.py.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport uint64_t
from libc.string cimport memcpy, memset

cnp.import_array()

ctypedef fused real:
    float
    double

cdef uint64_t NOT_COL0 = 0xFEFEFEFEFEFEFEFEu
cdef uint64_t NOT_COL7 = 0x7F7F7F7F7F7F7F7Fu


cdef inline uint64_t _shift(uint64_t b, int d) nogil:
    # d indexes: E, W, S, N, SE, SW, NE, NW
    if d == 0:
        return (b & NOT_COL7) << 1
    elif d == 1:
        return (b & NOT_COL0) >> 1
    elif d == 2:
        return b << 8
    elif d == 3:
        return b >> 8
    elif d == 4:
        return (b & NOT_COL7) << 9
    elif d == 5:
        return (b & NOT_COL0) << 7
    elif d == 6:
        return (b & NOT_COL7) >> 7
    else:
        return (b & NOT_COL0) >> 9


cdef uint64_t _legal_mask(uint64_t own, uint64_t opp) nogil:
    cdef uint64_t empty = ~(own | opp)
    cdef uint64_t legal = 0, t
    cdef int d, i
    for d in range(8):
        t = _shift(own, d) & opp
        for i in range(5):
            t |= _shift(t, d) & opp
        legal |= _shift(t, d) & empty
    return legal


cdef uint64_t _flips_mask(uint64_t own, uint64_t opp, int sq) nogil:
    cdef uint64_t pos = (<uint64_t> 1) << sq
    cdef uint64_t flips = 0, run, cur
    cdef int d
    if (own | opp) & pos:
        return 0
    for d in range(8):
        run = 0
        cur = _shift(pos, d)
        while cur & opp:
            run |= cur
            cur = _shift(cur, d)
        if run != 0 and (cur & own) != 0:
            flips |= run
    return flips


def legal_mask(own, opp):
    """Bitboard of squares where ``own`` has a flipping placement."""
    return int(_legal_mask(<uint64_t> own, <uint64_t> opp))


def flips_mask(own, opp, sq):
    """Bitboard of opponent pieces flipped by ``own`` placing at ``sq``."""
    return int(_flips_mask(<uint64_t> own, <uint64_t> opp, <int> sq))


def im2col(real[:, :, :, ::1] x, int kh, int kw, int pad):
    """Gather sliding patches of (N, H, W, C) into (N*OH*OW, kh*kw*C), stride 1."""
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = h + 2 * pad - kh + 1
    cdef Py_ssize_t ow = w + 2 * pad - kw + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n * oh * ow, kh * kw * c), dtype=dtype)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t b, y, xx, i, j, row, col, iy, ix, j0
    with nogil:
        for b in range(n):
            for y in range(oh):
                for xx in range(ow):
                    row = (b * oh + y) * ow + xx
                    col = 0
                    j0 = xx - pad
                    for i in range(kh):
                        iy = y + i - pad
                        if iy < 0 or iy >= h:
                            memset(&out[row, col], 0, kw * c * sizeof(real))
                            col += kw * c
                        elif j0 >= 0 and j0 + kw <= w:
                            memcpy(&out[row, col], &x[b, iy, j0, 0], kw * c * sizeof(real))
                            col += kw * c
                        else:
                            for j in range(kw):
                                ix = j0 + j
                                if 0 <= ix < w:
                                    memcpy(&out[row, col], &x[b, iy, ix, 0], c * sizeof(real))
                                else:
                                    memset(&out[row, col], 0, c * sizeof(real))
                                col += c
    return out_arr


def col2im(real[:, ::1] dcols, Py_ssize_t n, Py_ssize_t h, Py_ssize_t w, Py_ssize_t c,
           int kh, int kw, int pad):
    """Scatter-add adjoint of im2col; returns (n, h, w, c)."""
    cdef Py_ssize_t oh = h + 2 * pad - kh + 1
    cdef Py_ssize_t ow = w + 2 * pad - kw + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, h, w, c), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, y, xx, i, j, k, row, col, iy, ix
    with nogil:
        # (i, j) outermost so each target element accumulates its taps in
        # ascending (i, j) order, matching the pure-numpy pass order exactly.
        for i in range(kh):
            for j in range(kw):
                col = (i * kw + j) * c
                for b in range(n):
                    for y in range(oh):
                        iy = y + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for xx in range(ow):
                            ix = xx + j - pad
                            if ix < 0 or ix >= w:
                                continue
                            row = (b * oh + y) * ow + xx
                            for k in range(c):
                                out[b, iy, ix, k] += dcols[row, col + k]
    return out_arr
