"""Rules-exact Othello engine on 64-bit bitboards.

Squares are numbered row-major, ``row * 8 + col`` with row 0 at the top;
action index 64 is the explicit PASS move. A position is two occupancy
masks plus the side to move. All operations are pure functions of their
inputs, so boards can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import kernels

PASS = 64
BOARD_SQUARES = 64
ACTION_SPACE = 65  # 64 squares + PASS

_U64 = 0xFFFFFFFFFFFFFFFF


class Color(IntEnum):
    BLACK = 0
    WHITE = 1

    @property
    def opponent(self) -> "Color":
        return Color.WHITE if self is Color.BLACK else Color.BLACK


class IllegalMoveError(Exception):
    pass


class NotTerminalError(Exception):
    pass


class GameOutcome(NamedTuple):
    winner: Color | None  # None means draw
    piece_diff: int  # black count minus white count

    def result_for(self, color: Color) -> float:
        """+1 win, 0 draw, -1 loss from ``color``'s perspective."""
        if self.winner is None:
            return 0.0
        return 1.0 if self.winner == color else -1.0


@dataclass(frozen=True)
class Board:
    black: int
    white: int
    to_move: Color

    def own_mask(self) -> int:
        return self.black if self.to_move == Color.BLACK else self.white

    def opp_mask(self) -> int:
        return self.white if self.to_move == Color.BLACK else self.black

    def mask_for(self, color: Color) -> int:
        return self.black if color == Color.BLACK else self.white

    def counts(self) -> tuple[int, int]:
        """(black, white) piece counts."""
        return self.black.bit_count(), self.white.bit_count()

    def to_text(self) -> str:
        """8 rows of {'.', 'B', 'W'} plus a "to_move: B|W" line."""
        rows = []
        for r in range(8):
            row = []
            for c in range(8):
                bit = 1 << (r * 8 + c)
                row.append("B" if self.black & bit else "W" if self.white & bit else ".")
            rows.append("".join(row))
        rows.append(f"to_move: {'B' if self.to_move == Color.BLACK else 'W'}")
        return "\n".join(rows)

    @staticmethod
    def from_text(text: str) -> "Board":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if len(lines) != 9:
            raise ValueError(f"expected 8 board rows plus a to_move line, got {len(lines)} lines")
        black = white = 0
        for r, line in enumerate(lines[:8]):
            if len(line) != 8:
                raise ValueError(f"row {r} has length {len(line)}, expected 8")
            for c, ch in enumerate(line):
                bit = 1 << (r * 8 + c)
                if ch == "B":
                    black |= bit
                elif ch == "W":
                    white |= bit
                elif ch != ".":
                    raise ValueError(f"bad cell {ch!r} at row {r} col {c}")
        tm = lines[8].replace(" ", "")
        if tm == "to_move:B":
            to_move = Color.BLACK
        elif tm == "to_move:W":
            to_move = Color.WHITE
        else:
            raise ValueError(f"bad to_move line: {lines[8]!r}")
        if black & white:
            raise ValueError("black and white masks overlap")
        return Board(black, white, to_move)


def initial_board() -> Board:
    # Standard start: White on d4/e5, Black on e4/d5, Black moves first.
    white = (1 << 27) | (1 << 36)
    black = (1 << 28) | (1 << 35)
    return Board(black, white, Color.BLACK)


def square(row: int, col: int) -> int:
    return row * 8 + col


def _mask_to_moves(mask: int) -> list[int]:
    moves = []
    while mask:
        lsb = mask & -mask
        moves.append(lsb.bit_length() - 1)
        mask ^= lsb
    return moves


def legal_moves(board: Board) -> list[int]:
    """All flipping placements for the side to move.

    Returns ``[PASS]`` when the mover is blocked but the opponent is not,
    and ``[]`` when the position is terminal.
    """
    own, opp = board.own_mask(), board.opp_mask()
    mask = kernels.legal_mask(own, opp)
    if mask:
        return _mask_to_moves(mask)
    if kernels.legal_mask(opp, own):
        return [PASS]
    return []


def is_terminal(board: Board) -> bool:
    own, opp = board.own_mask(), board.opp_mask()
    return not kernels.legal_mask(own, opp) and not kernels.legal_mask(opp, own)


def apply_move(board: Board, move: int) -> Board:
    """Apply ``move`` (a square index or PASS) and switch the side to move."""
    if move == PASS:
        if kernels.legal_mask(board.own_mask(), board.opp_mask()):
            raise IllegalMoveError("PASS while a flipping move exists")
        return Board(board.black, board.white, board.to_move.opponent)
    if not 0 <= move < BOARD_SQUARES:
        raise IllegalMoveError(f"move index {move} out of range")
    own, opp = board.own_mask(), board.opp_mask()
    flips = kernels.flips_mask(own, opp, move)
    if not flips:
        raise IllegalMoveError(f"move {move} flips nothing for {board.to_move.name}")
    own = (own | flips | (1 << move)) & _U64
    opp &= ~flips & _U64
    if board.to_move == Color.BLACK:
        return Board(own, opp, Color.WHITE)
    return Board(opp, own, Color.BLACK)


def game_outcome(board: Board) -> GameOutcome:
    """Outcome by piece count; raises NotTerminalError if play can continue."""
    if not is_terminal(board):
        raise NotTerminalError("position still has legal moves")
    nb, nw = board.counts()
    if nb > nw:
        winner = Color.BLACK
    elif nw > nb:
        winner = Color.WHITE
    else:
        winner = None
    return GameOutcome(winner, nb - nw)


@lru_cache(maxsize=1)
def _openings_cached() -> tuple[Board, ...]:
    level = {(initial_board().black, initial_board().white, Color.BLACK)}
    boards = {initial_board()}
    for _ in range(4):
        nxt = set()
        for b in boards:
            for mv in legal_moves(b):
                nxt.add(apply_move(b, mv))
        boards = nxt
        level = {(b.black, b.white, b.to_move) for b in boards}
        assert len(level) == len(boards)
    return tuple(sorted(boards, key=lambda b: (b.black, b.white, b.to_move)))


def enumerate_openings() -> list[Board]:
    """All distinct positions after exactly 4 plies, in canonical order.

    Dedup key is the exact position (occupancy masks + side to move); the
    ordering is lexicographic on (black mask, white mask) for reproducible
    evaluation schedules.
    """
    return list(_openings_cached())


def encode_state(board: Board, perspective: Color) -> np.ndarray:
    """Two binary 8x8 planes: plane 0 = ``perspective`` pieces, plane 1 = opponent."""
    own = board.mask_for(perspective)
    opp = board.mask_for(perspective.opponent)
    planes = np.empty((2, 8, 8), dtype=np.float32)
    planes[0] = _mask_to_plane(own)
    planes[1] = _mask_to_plane(opp)
    return planes


def _mask_to_plane(mask: int) -> np.ndarray:
    raw = np.frombuffer(mask.to_bytes(8, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little").reshape(8, 8).astype(np.float32)
