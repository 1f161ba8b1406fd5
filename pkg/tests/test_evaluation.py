import json

import numpy as np
import pytest

from expertq.board import Color, enumerate_openings, initial_board
from expertq.evaluation import (
    EvalReport,
    QNetPolicy,
    as_policy,
    evaluate,
    play_game,
    score,
    tournament,
    tournament_matrix_csv,
)
from expertq.nn.network import load_network
from expertq.policies import ScriptedPolicy
from expertq.qlearning import AgentNets

from test_qlearning import small_agent, small_q_net


def test_score_formula():
    assert score(472, 0, 472) == 1.0
    assert score(0, 472, 472) == 0.5
    assert score(236, 0, 472) == 0.5
    assert score(100, 50, 472) == pytest.approx(125 / 472)
    with pytest.raises(ValueError):
        score(1, 0, 0)
    with pytest.raises(ValueError):
        score(400, 100, 472)


def test_play_game_from_initial():
    outcome = play_game(ScriptedPolicy("random", 1), ScriptedPolicy("random", 2), initial_board())
    assert -64 <= outcome.piece_diff <= 64
    assert outcome.result_for(Color.BLACK) in (-1.0, 0.0, 1.0)
    assert outcome.result_for(Color.BLACK) == -outcome.result_for(Color.WHITE)


def test_evaluate_scripted_agent_games_and_coverage():
    report = evaluate(ScriptedPolicy("greedy"), ScriptedPolicy("random"), rounds=1, seed=3)
    assert report.games == 472
    assert report.wins + report.draws + report.losses == 472
    assert report.score == pytest.approx((report.wins + 0.5 * report.draws) / 472)
    # every opening appears exactly twice, once per color
    seen = {}
    for opening_id, color, _ in report.per_opening:
        seen.setdefault(opening_id, []).append(color)
    assert len(seen) == 236
    assert all(sorted(colors) == ["B", "W"] for colors in seen.values())


def test_evaluate_deterministic_given_seed():
    a = evaluate(ScriptedPolicy("greedy"), ScriptedPolicy("random"), rounds=1, seed=11)
    b = evaluate(ScriptedPolicy("greedy"), ScriptedPolicy("random"), rounds=1, seed=11)
    assert a == b
    c = evaluate(ScriptedPolicy("greedy"), ScriptedPolicy("random"), rounds=1, seed=12)
    assert c != a  # different opponent draws


def test_evaluate_rounds_scale_games():
    report = evaluate(ScriptedPolicy("greedy"), ScriptedPolicy("random"), rounds=2, seed=5)
    assert report.games == 944


def test_evaluate_network_agent_writes_nothing():
    nets = small_agent(20)
    before = nets.q_a.to_bytes()
    report = evaluate(nets, ScriptedPolicy("random"), rounds=1, seed=6)
    assert report.games == 472
    assert nets.q_a.to_bytes() == before


def test_evaluate_save_load_round_trip(tmp_path):
    net = small_q_net(21)
    path = tmp_path / "model.xqnn"
    net.save(path)
    direct = evaluate(net, ScriptedPolicy("random"), rounds=1, seed=7)
    loaded = evaluate(load_network(path), ScriptedPolicy("random"), rounds=1, seed=7)
    assert direct == loaded


def test_as_policy_accepts_all_player_kinds():
    nets = small_agent(22)
    assert isinstance(as_policy(nets), QNetPolicy)
    assert isinstance(as_policy(nets.q_a), QNetPolicy)
    scripted = ScriptedPolicy("random")
    assert as_policy(scripted) is scripted
    with pytest.raises(TypeError):
        as_policy(42)


def test_tournament_pairings_and_counts():
    players = [small_q_net(s) for s in (30, 31, 32)]
    results = tournament(players, rounds=1, seed=0, names=["a", "b", "c"])
    assert [r.pair for r in results] == [("a", "b"), ("a", "c"), ("b", "c")]
    for r in results:
        assert r.games == 472
        assert r.a_wins + r.b_wins + r.draws == 472


def test_tournament_requires_two_players():
    with pytest.raises(ValueError):
        tournament([small_q_net(33)], rounds=1)


def test_tournament_identical_player_is_color_symmetric():
    net = small_q_net(34)
    (result,) = tournament([net, net.clone()], rounds=1, seed=0, names=["x", "y"])
    # both sides play the same deterministic function, so each opening's two
    # games are the same game with the colors relabeled
    assert result.a_wins == result.b_wins
    # mirror property of the score: the two directions sum to 1
    s_a = score(result.a_wins, result.draws, result.games)
    s_b = score(result.b_wins, result.draws, result.games)
    assert s_a + s_b == pytest.approx(1.0)


def test_tournament_matrix_csv():
    players = [small_q_net(s) for s in (35, 36)]
    results = tournament(players, rounds=1, seed=0, names=["p0", "p1"])
    csv = tournament_matrix_csv(results)
    lines = csv.strip().split("\n")
    assert lines[0] == ",p0,p1"
    assert lines[1].startswith("p0,,")
    assert lines[2].startswith("p1,")
    r = results[0]
    assert f"{r.a_wins} ({r.a_wins / r.games:.2f})" in lines[1]


def test_eval_report_serialization():
    report = EvalReport(3, 1, 2, 6, score(3, 1, 6), [(0, "B", "win")])
    data = json.loads(report.to_json())
    assert data["wins"] == 3 and data["games"] == 6
    assert data["per_opening"] == [[0, "B", "win"]]
    row = report.csv_row("run1", 2000, "random")
    assert row.startswith("run1,2000,random,3,1,2,")
    assert EvalReport.csv_header() == "run,iter,opponent,wins,draws,losses,score"


def test_openings_reused_not_recomputed():
    a = enumerate_openings()
    b = enumerate_openings()
    assert a == b and len(a) == 236
