"""Test protocol: 236-opening evaluation and round-robin tournaments.

One evaluation round plays every 4-ply opening twice, once per color, for
472 games. Agents act greedily (no exploration) on the raw Q output in
inference mode. The score is ``(wins + 0.5 * draws) / games``. Opponent
randomness is reseeded per game from the master seed and game index, so
reports are reproducible yet opponents vary between games.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .board import (
    Board,
    Color,
    GameOutcome,
    apply_move,
    encode_state,
    enumerate_openings,
    game_outcome,
    legal_moves,
)
from .nn import Network
from .policies import NoLegalMoveError, ScriptedPolicy
from .qlearning import AgentNets, greedy_action


def score(wins: int, draws: int, games: int) -> float:
    """(wins + 0.5 * draws) / games."""
    if games <= 0:
        raise ValueError("games must be positive")
    if wins + draws > games:
        raise ValueError("wins + draws exceed games")
    return (wins + 0.5 * draws) / games


@dataclass
class EvalReport:
    wins: int
    draws: int
    losses: int
    games: int
    score: float
    per_opening: list[tuple[int, str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "wins": self.wins,
            "draws": self.draws,
            "losses": self.losses,
            "games": self.games,
            "score": self.score,
            "per_opening": [list(row) for row in self.per_opening],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def csv_header() -> str:
        return "run,iter,opponent,wins,draws,losses,score"

    def csv_row(self, run: str, iteration, opponent: str) -> str:
        return f"{run},{iteration},{opponent},{self.wins},{self.draws},{self.losses},{self.score!r}"


@dataclass
class TournamentResult:
    pair: tuple[str, str]
    a_wins: int
    b_wins: int
    draws: int
    rounds: int

    @property
    def games(self) -> int:
        return self.a_wins + self.b_wins + self.draws


class QNetPolicy:
    """Greedy play on a Q-network's raw output, legality-masked."""

    def __init__(self, network: Network):
        self.network = network

    def move(self, board: Board) -> int:
        moves = legal_moves(board)
        if not moves:
            raise NoLegalMoveError("terminal position")
        q = self.network.forward(encode_state(board, board.to_move))[0]
        return greedy_action(q, moves)

    def reseed(self, seed) -> None:  # deterministic policy, nothing to reseed
        pass


def as_policy(player) -> object:
    """Accept AgentNets, a bare Network, or any object with .move(board)."""
    if isinstance(player, AgentNets):
        return QNetPolicy(player.q_a)
    if isinstance(player, Network):
        return QNetPolicy(player)
    if hasattr(player, "move"):
        return player
    raise TypeError(f"cannot interpret {type(player).__name__} as a player")


def play_game(black, white, start: Board) -> GameOutcome:
    """Play out a game from ``start`` with per-color policies."""
    board = start
    while True:
        moves = legal_moves(board)
        if not moves:
            return game_outcome(board)
        mover = black if board.to_move == Color.BLACK else white
        board = apply_move(board, mover.move(board))


def evaluate(agent, opponent: ScriptedPolicy, rounds: int = 1, seed: int = 0,
             openings: list[Board] | None = None) -> EvalReport:
    """Play ``rounds`` x 472 games over the openings, both colors evenly."""
    agent_policy = as_policy(agent)
    if openings is None:
        openings = enumerate_openings()
    wins = draws = losses = 0
    per_opening = []
    game_index = 0
    with threadpool_limits(limits=1):
        for _ in range(rounds):
            for opening_id, opening in enumerate(openings):
                for agent_color in (Color.BLACK, Color.WHITE):
                    opponent.reseed(np.random.SeedSequence([seed, game_index]))
                    if agent_color == Color.BLACK:
                        outcome = play_game(agent_policy, opponent, opening)
                    else:
                        outcome = play_game(opponent, agent_policy, opening)
                    result = outcome.result_for(agent_color)
                    if result > 0:
                        wins += 1
                        tag = "win"
                    elif result < 0:
                        losses += 1
                        tag = "loss"
                    else:
                        draws += 1
                        tag = "draw"
                    per_opening.append((opening_id, "B" if agent_color == Color.BLACK else "W", tag))
                    game_index += 1
    games = len(per_opening)
    return EvalReport(wins, draws, losses, games, score(wins, draws, games), per_opening)


def tournament(players: list, rounds: int = 10, seed: int = 0,
               names: list[str] | None = None) -> list[TournamentResult]:
    """Round-robin: every pair plays ``rounds`` x 472 games, colors split evenly."""
    if len(players) < 2:
        raise ValueError("need at least two players")
    if names is None:
        names = [f"player{i}" for i in range(len(players))]
    if len(names) != len(players):
        raise ValueError("names must match players")
    policies = [as_policy(p) for p in players]
    openings = enumerate_openings()
    results = []
    with threadpool_limits(limits=1):
        for i in range(len(players)):
            for j in range(i + 1, len(players)):
                a_wins = b_wins = draws = 0
                for _ in range(rounds):
                    for opening in openings:
                        for a_color in (Color.BLACK, Color.WHITE):
                            if a_color == Color.BLACK:
                                outcome = play_game(policies[i], policies[j], opening)
                            else:
                                outcome = play_game(policies[j], policies[i], opening)
                            result = outcome.result_for(a_color)
                            if result > 0:
                                a_wins += 1
                            elif result < 0:
                                b_wins += 1
                            else:
                                draws += 1
                results.append(TournamentResult((names[i], names[j]), a_wins, b_wins, draws, rounds))
    return results


def tournament_matrix_csv(results: list[TournamentResult]) -> str:
    """Matrix CSV: each cell is the row player's wins (and win rate) against
    the column player, both directions filled from the same games."""
    names: list[str] = []
    for res in results:
        for name in res.pair:
            if name not in names:
                names.append(name)
    cells = {}
    for res in results:
        a, b = res.pair
        cells[(a, b)] = (res.a_wins, res.games)
        cells[(b, a)] = (res.b_wins, res.games)
    lines = ["," + ",".join(names)]
    for a in names:
        row = [a]
        for b in names:
            if a == b:
                row.append("")
            else:
                wins, games = cells[(a, b)]
                row.append(f"{wins} ({wins / games:.2f})")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
