import io
import math

import numpy as np
import pytest

from potforecast.core import LossFunction, absolute_loss, squared_loss
from potforecast.errors import DomainError
from potforecast.game import (
    GameConfig,
    greedy_adversary,
    parse_transcript,
    read_transcript,
    run_game,
    serialize_transcript,
    sweep,
    write_transcript,
)
from potforecast.potentials import ExponentialPotential
from potforecast.randomized import nonconvex_fixture


def lse(x, eta):
    m = max(x)
    return m + math.log(sum(math.exp(eta * (v - m)) for v in x)) / eta


def test_greedy_example_by_hand():
    eta, n = 1.0, 100
    P = ExponentialPotential(eta)
    p, f = (0.9, 0.1), (0.0, 1.0)
    # b=1: forecaster loses 0.9, experts (1, 0); b=0: forecaster 0.1, experts (0, 1)
    v1 = lse([-0.1 / 10, 0.9 / 10], eta)
    v0 = lse([0.1 / 10, -0.9 / 10], eta)
    assert v1 > v0
    assert greedy_adversary(p, f, np.zeros(2), absolute_loss(), P, n) == 1


def test_greedy_symmetric_tie():
    P = ExponentialPotential(1.2)
    assert greedy_adversary((0.5, 0.5), (0.0, 1.0), np.zeros(2), absolute_loss(), P, 9) == 0


def test_greedy_single_expert_tie():
    P = ExponentialPotential(1.0)
    for loss in (absolute_loss(), squared_loss()):
        assert greedy_adversary((1.0,), (0.4,), np.zeros(1), loss, P, 5) == 0


@pytest.mark.parametrize("loss", [absolute_loss(), squared_loss()], ids=lambda l: l.kind)
@pytest.mark.parametrize("adversary", ["oblivious_seeded", "greedy", "minimax_lookahead"])
@pytest.mark.parametrize("n", [1, 10, 100, 10000])
@pytest.mark.parametrize("N", [1, 2, 5, 10])
def test_config_matrix(N, n, adversary, loss):
    tr = run_game(GameConfig(n, N, loss, adversary_policy=adversary, seed=N * 7 + n), keep_rounds=False)
    assert not tr.aborted, tr.diagnostic
    assert tr.bound_satisfied
    assert tr.max_blackwell <= 1e-12
    assert tr.max_telescoping <= 1e-12
    if N == 1:
        assert tr.regret <= 0


def test_greedy_bound_example():
    tr = run_game(GameConfig(10000, 2, absolute_loss(), eta=math.sqrt(2 * math.log(2))), keep_rounds=False)
    assert tr.bound_satisfied
    assert tr.bound_value == pytest.approx(100 * math.sqrt(2 * math.log(2)), rel=1e-14)


def test_same_seed_same_transcript():
    cfg = GameConfig(300, 4, squared_loss(), adversary_policy="oblivious_seeded", seed=99)
    assert serialize_transcript(run_game(cfg)) == serialize_transcript(run_game(cfg))
    other = GameConfig(300, 4, squared_loss(), adversary_policy="oblivious_seeded", seed=100)
    assert serialize_transcript(run_game(cfg)) != serialize_transcript(run_game(other))


@pytest.mark.parametrize("cfg", [
    GameConfig(50, 3, absolute_loss(), adversary_policy="greedy", seed=1),
    GameConfig(50, 2, squared_loss(), adversary_policy="minimax_lookahead", lookahead_depth=3),
    GameConfig(40, 3, LossFunction("absolute", outcomes=(0, 0.5, 1)), expert_policy="constant_grid"),
    GameConfig(6, 2, absolute_loss(), expert_policy="fixed_table", advice_table=((0.0, 1.0), (1.0, 0.25))),
    GameConfig(60, 3, nonconvex_fixture().loss, adversary_policy="oblivious_seeded", mode="randomized", seed=4),
], ids=["greedy", "lookahead", "three-outcomes", "table", "randomized"])
def test_transcript_round_trip(cfg, tmp_path):
    tr = run_game(cfg)
    path = tmp_path / "t.txt"
    write_transcript(tr, path)
    back = read_transcript(path)
    assert back.config == cfg
    assert back.rounds == tr.rounds
    assert back.regret == pytest.approx(tr.regret, abs=1e-9)
    assert back.bound_satisfied == tr.bound_satisfied
    assert serialize_transcript(back) == path.read_text()


def test_streaming_sink_matches_serialization(tmp_path):
    cfg = GameConfig(200, 3, absolute_loss(), seed=5)
    buf = io.StringIO()
    lean = run_game(cfg, sink=buf, keep_rounds=False)
    assert lean.rounds == ()
    full = run_game(cfg)
    assert buf.getvalue() == serialize_transcript(full)
    assert lean.regret == full.regret
    run_game(cfg, sink=tmp_path / "s.txt")
    assert (tmp_path / "s.txt").read_text() == buf.getvalue()


def test_broken_constant_aborts_with_round():
    eta = math.sqrt(2 * math.log(2))
    cfg = GameConfig(100, 2, absolute_loss(), eta=eta, c=eta / 100, expert_policy="constant_grid")
    tr = run_game(cfg)
    assert tr.aborted and tr.aborted_round == len(tr.rounds)
    assert "round" in tr.diagnostic
    assert not tr.bound_satisfied
    back = parse_transcript(serialize_transcript(tr))
    assert back.aborted_round == tr.aborted_round


def test_config_validation():
    with pytest.raises(DomainError):
        GameConfig(0, 2)
    with pytest.raises(DomainError):
        GameConfig(10, 2, mode="randomized", adversary_policy="greedy")
    with pytest.raises(DomainError):
        GameConfig(10, 3, nonconvex_fixture().loss)
    with pytest.raises(DomainError):
        GameConfig(10, 2, expert_policy="fixed_table")
    with pytest.raises(DomainError):
        GameConfig(10, 2, adversary_policy="minimax_lookahead", lookahead_depth=13)
    with pytest.raises(DomainError):
        parse_transcript("")


def test_sweep_eta_examples():
    N = 4
    values = [0.5, 1.0, math.sqrt(2 * math.log(N)), 2.0]
    rows = sweep(GameConfig(100, N, absolute_loss()), "eta", values)
    assert [r.param for r in rows] == values
    bounds = [r.bound for r in rows]
    assert int(np.argmin(bounds)) == 2
    assert all(r.regret <= r.bound + 1e-9 for r in rows)


def test_sweep_horizon_scaled_regret_bounded():
    rows = sweep(GameConfig(10, 3, squared_loss(), adversary_policy="greedy"), "horizon", [10, 100, 1000, 4000])
    C = math.sqrt(2 * math.log(3))
    assert all(r.regret / math.sqrt(r.param) <= C + 1e-9 for r in rows)


def test_sweep_empty_and_parallel():
    cfg = GameConfig(50, 2, absolute_loss())
    assert sweep(cfg, "eta", []) == []
    assert sweep(cfg, "experts", [1, 2, 3], workers=2) == sweep(cfg, "experts", [1, 2, 3])
    with pytest.raises(DomainError):
        sweep(cfg, "seed", [1])
