import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from potforecast.core import LossFunction
from potforecast.errors import BudgetExceeded, DomainError
from potforecast.minimax import (
    DiscreteGameSpec,
    MinimaxSolver,
    bound_audit,
    brute_force_value,
    evaluate_G_randomized,
    minimax_value,
    strategy_worst_case,
    terminal_value,
)
from potforecast.potentials import ExponentialPotential, default_eta
from potforecast.randomized import grid_actions, nonconvex_fixture


def test_terminal_value():
    spec = DiscreteGameSpec(horizon=3, n_experts=2)
    x = (0.25, -1.5)
    assert minimax_value(spec, 3, x) == 0.25
    assert terminal_value(x, [Fraction(0), Fraction(0)], 3) == 0.25
    assert terminal_value((0.0, 0.0), [Fraction(1), Fraction(-2)], 4) == 0.5


@pytest.mark.parametrize("n", [1, 3, 5])
def test_single_expert_is_zero(n):
    spec = DiscreteGameSpec(horizon=n, n_experts=1)
    assert minimax_value(spec) == 0.0
    audit = bound_audit(spec, ExponentialPotential(default_eta(1)))
    assert audit.minimax == 0.0 and audit.strategy == 0.0 and audit.holds


def test_one_round_two_experts_by_hand():
    # f = (0, 1) with weight q on expert 1: worst case max(q, 1 - q), minimized at q = 1/2
    spec = DiscreteGameSpec(horizon=1, n_experts=2, advice_grid=(0, 1))
    assert minimax_value(spec) == 0.5
    assert brute_force_value(spec) == 0.5


@pytest.mark.parametrize("spec", [
    DiscreteGameSpec(1, 2, advice_grid=(0, 1)),
    DiscreteGameSpec(1, 2),
    DiscreteGameSpec(2, 2, advice_grid=(0, 1), simplex_steps=4),
    DiscreteGameSpec(2, 2, advice_grid=(0, 1), simplex_steps=6, loss_kind="squared"),
    DiscreteGameSpec(3, 2, advice_grid=(0, 1), simplex_steps=2),
    DiscreteGameSpec(1, 3, advice_grid=(0, 1), simplex_steps=6),
    DiscreteGameSpec(1, 2, advice_grid=(0, 0.25, 1), outcomes=(0, 0.5, 1), simplex_steps=8),
], ids=lambda s: f"n{s.horizon}N{s.n_experts}A{len(s.advice_grid)}D{s.simplex_steps}{s.loss_kind[0]}")
def test_memoized_matches_brute_force(spec):
    assert spec.tree_size <= 10 ** 5
    assert minimax_value(spec) == brute_force_value(spec)
    x = (0.1, -0.2, 0.05)[:spec.n_experts]
    if spec.horizon > 1:
        assert minimax_value(spec, 1, x) == brute_force_value(spec, 1, x)


def test_monotone_in_state():
    spec = DiscreteGameSpec(horizon=3, n_experts=2)
    tabs = MinimaxSolver(spec).tables(0, (0.0, 0.0))
    for tab in tabs[1:]:
        for axis in range(2):
            assert np.diff(tab, axis=axis).min() >= 0


def test_grid_refinement_monotone():
    coarse = minimax_value(DiscreteGameSpec(3, 2, simplex_steps=10))
    fine = minimax_value(DiscreteGameSpec(3, 2, simplex_steps=20))
    assert fine <= coarse
    few = minimax_value(DiscreteGameSpec(3, 2, advice_grid=(0, 1)))
    many = minimax_value(DiscreteGameSpec(3, 2, advice_grid=(0, 0.5, 1)))
    assert few <= many
    two = minimax_value(DiscreteGameSpec(2, 2, outcomes=(0, 1)))
    three = minimax_value(DiscreteGameSpec(2, 2, outcomes=(0, 0.5, 1)))
    assert two <= three


def _strategy_oracle(spec, P, x, t):
    """Plain recursion over advice and outcomes with the gradient weights."""
    if t == spec.horizon:
        return max(x)
    loss = LossFunction(spec.loss_kind, outcomes=tuple(float(o) for o in spec.outcomes))
    g = P.gradient(np.array(x))
    p = g / g.sum()
    best = -math.inf
    for f in itertools.product([float(a) for a in spec.advice_grid], repeat=spec.n_experts):
        a = min(max(sum(pi * fi for pi, fi in zip(p, f)), 0.0), 1.0)
        for b in loss.outcomes:
            nxt = [xi + (loss(a, b) - loss(fi, b)) / math.sqrt(spec.horizon) for xi, fi in zip(x, f)]
            best = max(best, _strategy_oracle(spec, P, nxt, t + 1))
    return best


@pytest.mark.parametrize("n", [1, 2, 3])
def test_strategy_worst_case_oracle(n):
    spec = DiscreteGameSpec(n, 2)
    P = ExponentialPotential(default_eta(2))
    assert strategy_worst_case(spec, P) == pytest.approx(_strategy_oracle(spec, P, [0.0, 0.0], 0), abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_bound_chain(n):
    audit = bound_audit(DiscreteGameSpec(n, 2), ExponentialPotential(default_eta(2)))
    assert audit.holds, audit.summary()
    assert audit.bound == pytest.approx(math.sqrt(2 * math.log(2)), abs=1e-12)


def test_budget_refusal():
    spec = DiscreteGameSpec(3, 2)
    with pytest.raises(BudgetExceeded) as info:
        MinimaxSolver(spec, work_budget=1000).value(0, (0.0, 0.0))
    assert info.value.required > 1000
    with pytest.raises(BudgetExceeded):
        brute_force_value(DiscreteGameSpec(3, 2))


def test_spec_validation():
    with pytest.raises(DomainError):
        DiscreteGameSpec(7, 2)
    with pytest.raises(DomainError):
        DiscreteGameSpec(2, 4)
    with pytest.raises(DomainError):
        DiscreteGameSpec(2, 2, advice_grid=(0, 1.5))
    with pytest.raises(DomainError):
        DiscreteGameSpec(2, 2, simplex_steps=21)


def test_value_rows():
    spec = DiscreteGameSpec(2, 2, advice_grid=(0, 1))
    rows = MinimaxSolver(spec).value_rows()
    assert rows[0] == (0, 0.0, 0.0, minimax_value(spec))
    for t, x1, x2, v in rows:
        if t == 2:
            assert v == max(x1, x2)
    assert {r[0] for r in rows} == {0, 1, 2}


def test_G_zero_matrix():
    acts = grid_actions(3)
    assert evaluate_G_randomized([0.2, 0.3, 0.5], np.zeros((3, 3)), acts) == 0.0


def test_G_zero_gamma_psd():
    acts = nonconvex_fixture()
    rng = np.random.default_rng(1)
    for _ in range(20):
        M = rng.normal(size=(3, 3))
        assert evaluate_G_randomized(np.zeros(3), M @ M.T, acts) >= 0


@pytest.mark.parametrize("acts", [grid_actions(2), grid_actions(3), nonconvex_fixture()], ids=["2", "3", "nonconvex"])
def test_G_exponential_below_constant(acts):
    N = acts.size
    eta = default_eta(N)
    P = ExponentialPotential(eta)
    rng = np.random.default_rng(N)
    for _ in range(50):
        x = rng.normal(size=N)
        assert evaluate_G_randomized(P.gradient(x), P.hessian(x), acts) <= eta / 2 + 1e-9


def test_G_shape_checks():
    with pytest.raises(DomainError):
        evaluate_G_randomized([1.0, 0.0], np.zeros((3, 3)), grid_actions(2))
    with pytest.raises(DomainError):
        evaluate_G_randomized([-1.0, 0.0], np.zeros((2, 2)), grid_actions(2))
