"""Scripted opponents, the positional weight table, and expert examples.

Three scripted players: RANDOM (uniform over legal moves), GREEDY (one-ply
disc-count maximizer) and STOCHASTIC (70% random, 30% greedy on the weight
table). The same weight table doubles as the offline expert, labeling a
position -1/0/+1 by the sign of the weighted piece differential.
"""

from __future__ import annotations

import struct
from typing import NamedTuple

import numpy as np

from . import kernels
from .board import PASS, Board, Color, apply_move, encode_state, initial_board, legal_moves

# Per-square positional weights: corners 100, squares adjacent to corners -25.
HEUR_TABLE = np.array(
    [
        [100, -25, 10, 5, 5, 10, -25, 100],
        [-25, -25, 2, 2, 2, 2, -25, -25],
        [10, 2, 5, 1, 1, 5, 2, 10],
        [5, 2, 1, 2, 2, 1, 2, 5],
        [5, 2, 1, 2, 2, 1, 2, 5],
        [10, 2, 5, 1, 1, 5, 2, 10],
        [-25, -25, 2, 2, 2, 2, -25, -25],
        [100, -25, 10, 5, 5, 10, -25, 100],
    ],
    dtype=np.int64,
)

_HEUR_FLAT = tuple(int(v) for v in HEUR_TABLE.ravel())

RANDOM = "random"
GREEDY = "greedy"
STOCHASTIC = "stochastic"
POLICY_KINDS = (RANDOM, GREEDY, STOCHASTIC)


class NoLegalMoveError(Exception):
    pass


class ExpertExample(NamedTuple):
    state: np.ndarray  # (2, 8, 8) float32 binary planes
    label: int  # -1, 0 or 1


def _moves_or_raise(board: Board) -> list[int]:
    moves = legal_moves(board)
    if not moves:
        raise NoLegalMoveError("terminal position")
    return moves


def random_move(board: Board, rng: np.random.Generator) -> int:
    """Uniform choice over the legal moves."""
    moves = _moves_or_raise(board)
    return moves[int(rng.integers(len(moves)))]


def greedy_move(board: Board) -> int:
    """Legal move leaving the mover the most discs, lowest index on ties."""
    moves = _moves_or_raise(board)
    if moves == [PASS]:
        return PASS
    own = board.own_mask()
    best, best_count = moves[0], -1
    for mv in moves:  # ascending index, so strict > keeps the lowest tie
        count = own.bit_count() + 1 + kernels.flips_mask(own, board.opp_mask(), mv).bit_count()
        if count > best_count:
            best, best_count = mv, count
    return best


def heur_greedy_move(board: Board, heur: np.ndarray = HEUR_TABLE) -> int:
    """Legal move on the heaviest weight-table square, lowest index on ties."""
    moves = _moves_or_raise(board)
    if moves == [PASS]:
        return PASS
    flat = heur.ravel()
    best, best_w = moves[0], None
    for mv in moves:
        w = flat[mv]
        if best_w is None or w > best_w:
            best, best_w = mv, w
    return best


def stochastic_move(board: Board, rng: np.random.Generator, heur: np.ndarray = HEUR_TABLE) -> int:
    """70% like RANDOM, 30% greedy on the weight table (per-move split)."""
    if rng.random() < 0.7:
        return random_move(board, rng)
    _moves_or_raise(board)
    return heur_greedy_move(board, heur)


class ScriptedPolicy:
    """A scripted player with an owned random stream.

    Identical seed and board sequence give an identical move sequence; a
    single instance must not be shared across concurrent games.
    """

    def __init__(self, kind: str, seed: int = 0, heur: np.ndarray = HEUR_TABLE):
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {kind!r}")
        self.kind = kind
        self.heur = heur
        self.rng = np.random.default_rng(seed)

    def reseed(self, seed) -> None:
        self.rng = np.random.default_rng(seed)

    def move(self, board: Board) -> int:
        if self.kind == RANDOM:
            return random_move(board, self.rng)
        if self.kind == GREEDY:
            return greedy_move(board)
        return stochastic_move(board, self.rng, self.heur)


def expert_label(
    board: Board,
    perspective: Color,
    heur: np.ndarray = HEUR_TABLE,
    dead_zone: float = 0.0,
) -> int:
    """Sign of the weighted piece differential from ``perspective``.

    ``dead_zone`` widens the band mapped to 0 (default 0: only an exact
    tie is neutral).
    """
    diff = _weighted_sum(board.mask_for(perspective)) - _weighted_sum(board.mask_for(perspective.opponent))
    if diff > dead_zone:
        return 1
    if diff < -dead_zone:
        return -1
    return 0


def _weighted_sum(mask: int) -> int:
    total = 0
    while mask:
        lsb = mask & -mask
        total += _HEUR_FLAT[lsb.bit_length() - 1]
        mask ^= lsb
    return total


def generate_expert_examples(
    sampler: ScriptedPolicy,
    opponent: ScriptedPolicy,
    pool_size: int,
    keep: int,
    rng: np.random.Generator,
    dead_zone: float = 0.0,
) -> list[ExpertExample]:
    """Label states from full games of ``sampler`` vs ``opponent``.

    The sampler's color alternates per game. Every position at the sampler's
    own turns is recorded from its perspective and labeled, until
    ``pool_size`` states are collected; a uniform subset of ``keep`` is
    returned.
    """
    if keep > pool_size:
        raise ValueError("keep must not exceed pool_size")
    pool: list[ExpertExample] = []
    game_idx = 0
    while len(pool) < pool_size:
        sampler_color = Color.BLACK if game_idx % 2 == 0 else Color.WHITE
        b = initial_board()
        while len(pool) < pool_size:
            moves = legal_moves(b)
            if not moves:
                break
            if b.to_move == sampler_color:
                pool.append(
                    ExpertExample(
                        encode_state(b, sampler_color),
                        expert_label(b, sampler_color, sampler.heur, dead_zone),
                    )
                )
                if len(pool) == pool_size:
                    break
                b = apply_move(b, sampler.move(b))
            else:
                b = apply_move(b, opponent.move(b))
        game_idx += 1
    if keep == pool_size:
        return pool
    picked = rng.choice(pool_size, size=keep, replace=False)
    picked.sort()
    return [pool[i] for i in picked]


# Expert example file ("XQEX"): 4-byte magic, version byte, uint32 LE record
# count, then 33-byte records of plane0 (16 bytes), plane1 (16 bytes) and an
# int8 label. Planes are bit-packed row-major (bit i = square i) into the
# low 8 bytes; the high 8 bytes are reserved and zero.
XQEX_MAGIC = b"XQEX"
XQEX_VERSION = 1


def _pack_plane(plane: np.ndarray) -> bytes:
    bits = np.packbits(plane.astype(np.uint8).ravel(), bitorder="little").tobytes()
    return bits + b"\x00" * 8


def _unpack_plane(raw: bytes) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(raw[:8], dtype=np.uint8), bitorder="little")
    return bits.reshape(8, 8).astype(np.float32)


def save_expert_examples(path, examples: list[ExpertExample]) -> None:
    with open(path, "wb") as f:
        f.write(XQEX_MAGIC)
        f.write(struct.pack("<BI", XQEX_VERSION, len(examples)))
        for ex in examples:
            f.write(_pack_plane(ex.state[0]))
            f.write(_pack_plane(ex.state[1]))
            f.write(struct.pack("<b", ex.label))


def load_expert_examples(path) -> list[ExpertExample]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != XQEX_MAGIC:
        raise ValueError(f"{path}: not an expert example file (bad magic)")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != XQEX_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 9
    if len(data) != offset + 33 * count:
        raise ValueError(f"{path}: truncated file")
    examples = []
    for _ in range(count):
        p0 = _unpack_plane(data[offset : offset + 16])
        p1 = _unpack_plane(data[offset + 16 : offset + 32])
        (label,) = struct.unpack_from("<b", data, offset + 32)
        if label not in (-1, 0, 1):
            raise ValueError(f"{path}: bad label {label}")
        examples.append(ExpertExample(np.stack([p0, p1]), label))
        offset += 33
    return examples
