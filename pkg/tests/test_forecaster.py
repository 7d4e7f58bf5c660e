import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from potforecast.core import absolute_loss, squared_loss
from potforecast.errors import DomainError, InvariantViolation, SequencingError
from potforecast.forecaster import (
    ForecasterState,
    loss_softmax_weights,
    observe,
    predict,
    run_forecast,
)
from potforecast.potentials import ExponentialPotential, default_eta


def test_observe_example():
    P = ExponentialPotential(1.0)
    s0 = ForecasterState.start(P, absolute_loss(), horizon=4, n_experts=2)
    s1, rec = observe(s0, [0.0, 1.0], 1)
    np.testing.assert_allclose(s1.x, [-0.25, 0.25], atol=1e-15)
    assert rec.prediction == 0.5
    assert rec.blackwell == pytest.approx(0.0, abs=1e-15)
    assert rec.increments == (-0.5, 0.5)
    assert s1.round == 1
    # the old state is untouched
    np.testing.assert_array_equal(s0.x, [0.0, 0.0])


def test_predict_example():
    P = ExponentialPotential(1.0)
    ln2 = math.log(2)
    s = ForecasterState(
        x=np.array([0.0, ln2]), round=1, horizon=4, potential=P, loss=absolute_loss(),
        forecaster_loss=2.0, expert_losses=np.array([2.0, 2.0 - 2 * ln2]))
    w, a = predict(s, [0.0, 1.0])
    np.testing.assert_allclose(w, [1 / 3, 2 / 3], atol=1e-15)
    assert a == pytest.approx(2 / 3, abs=1e-15)
    np.testing.assert_allclose(loss_softmax_weights(s), w, atol=1e-12)


def test_inconsistent_state_is_flagged():
    P = ExponentialPotential(1.0)
    s = ForecasterState(
        x=np.array([0.0, 1.0]), round=0, horizon=4, potential=P, loss=absolute_loss(),
        forecaster_loss=0.0, expert_losses=np.zeros(2))
    with pytest.raises(InvariantViolation):
        predict(s, [0.2, 0.4])


def test_single_expert_tracks_exactly():
    P = ExponentialPotential(default_eta(1))
    rng = np.random.default_rng(2)
    adv = rng.random((50, 1))
    out = rng.integers(0, 2, 50)
    for loss in (absolute_loss(), squared_loss()):
        res = run_forecast(P, loss, adv, out)
        assert all(rd.weights == (1.0,) for rd in res.rounds)
        assert all(rd.prediction == rd.advice[0] for rd in res.rounds)
        assert res.regret == 0.0


def test_identical_advice_keeps_state_at_zero():
    P = ExponentialPotential(default_eta(3))
    res = run_forecast(P, absolute_loss(), [[0.3, 0.3, 0.3]] * 20, [1, 0] * 10)
    np.testing.assert_array_equal(res.state.x, np.zeros(3))
    assert res.regret == 0.0


def test_sequencing_errors():
    P = ExponentialPotential(1.0)
    s = ForecasterState.start(P, absolute_loss(), horizon=1, n_experts=2)
    s, _ = observe(s, [0.0, 1.0], 0)
    with pytest.raises(SequencingError):
        predict(s, [0.0, 1.0])
    with pytest.raises(SequencingError):
        run_forecast(P, absolute_loss(), [[0.0, 1.0]], [0, 1])
    with pytest.raises(SequencingError):
        run_forecast(P, absolute_loss(), [], [])


def test_advice_validation():
    s = ForecasterState.start(ExponentialPotential(1.0), absolute_loss(), horizon=3, n_experts=2)
    with pytest.raises(DomainError):
        predict(s, [0.0, 1.5])
    with pytest.raises(DomainError):
        predict(s, [0.0, 0.5, 1.0])
    with pytest.raises(DomainError):
        ForecasterState.start(ExponentialPotential(1.0), absolute_loss(), horizon=0, n_experts=2)


def test_one_round_bound():
    # two opposite experts, one round: the forecaster loses 1/2, the best expert 0
    P = ExponentialPotential(default_eta(2))
    res = run_forecast(P, absolute_loss(), [[0.0, 1.0]], [1])
    assert res.regret == 0.5
    assert res.bound == pytest.approx(math.sqrt(2 * math.log(2)), abs=1e-15)
    assert res.bound_satisfied


def test_deterministic():
    P = ExponentialPotential(default_eta(4))
    rng = np.random.default_rng(9)
    adv = rng.random((200, 4))
    out = rng.integers(0, 2, 200)
    a = run_forecast(P, squared_loss(), adv, out)
    b = run_forecast(P, squared_loss(), adv, out)
    assert a.rounds == b.rounds
    assert a.regret == b.regret


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 60), st.integers(0, 2 ** 32 - 1), st.booleans())
def test_bound_and_per_round_invariants(N, n, seed, squared):
    rng = np.random.default_rng(seed)
    loss = squared_loss() if squared else absolute_loss()
    adv = rng.random((n, N))
    # mix in extreme advice so increments hit their range
    adv[rng.random((n, N)) < 0.3] = 0.0
    out = rng.integers(0, 2, n)
    res = run_forecast(ExponentialPotential(default_eta(N)), loss, adv, out)
    assert res.max_blackwell <= 1e-12
    assert res.max_telescoping <= 1e-12
    assert res.regret <= math.sqrt(2 * n * math.log(N)) + 1e-9 if N > 1 else res.regret <= 1e-12
    # regret from the recorded transcript agrees with the state
    fl = sum(loss(rd.prediction, rd.outcome) for rd in res.rounds)
    el = np.sum([[loss(v, rd.outcome) for v in rd.advice] for rd in res.rounds], axis=0)
    assert res.regret == pytest.approx(fl - el.min(), abs=1e-9)
