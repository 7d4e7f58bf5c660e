"""Randomized prediction over a finite action set.

The forecaster draws action ``I_t`` from a distribution ``p_t`` built from
the potential gradient. Regret is measured in expectation over the draw,
against the best fixed action; the outcome sequence is oblivious (fixed in
advance), so no convexity of the loss is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import LossFunction, as_weights
from .errors import DomainError, InvariantViolation, SequencingError
from .forecaster import ROUND_TOL
from .core import IDENTITY_TOL
from .potentials import bound_constant, normalize_gradient


@dataclass(frozen=True, eq=False)
class ActionSet:
    actions: tuple
    loss: LossFunction

    def __post_init__(self):
        if not self.actions:
            raise DomainError("action set must be nonempty")
        object.__setattr__(self, "actions", tuple(self.actions))
        cols = [[self.loss(y, b) for y in self.actions] for b in self.loss.outcomes]
        m = np.array(cols, dtype=float).T
        if m.min() < 0 or m.max() > 1:
            raise DomainError("action losses must lie in [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "_matrix", m)

    @property
    def size(self) -> int:
        return len(self.actions)

    @property
    def matrix(self) -> np.ndarray:
        """``matrix[i, k] = l(y_i, outcomes[k])``."""
        return self._matrix

    def column(self, b) -> np.ndarray:
        return self._matrix[:, self.loss._outcome_index(b)]


def grid_actions(n: int, loss: LossFunction | None = None) -> ActionSet:
    """Actions ``i/(n-1)`` spread over [0, 1] (a single action at 0 when n == 1)."""
    loss = loss or LossFunction("absolute")
    ys = tuple(i / (n - 1) for i in range(n)) if n > 1 else (0.0,)
    return ActionSet(ys, loss)


def nonconvex_fixture() -> ActionSet:
    """Three actions under a loss that is not convex along the action line.

    ``l(0.5, 0) = 0.9`` exceeds the chord value 0.5 between the endpoints.
    """
    loss = LossFunction(
        kind="table",
        actions=(0.0, 0.5, 1.0),
        outcomes=(0, 1),
        table=((0.0, 1.0), (0.9, 0.2), (1.0, 0.0)),
    )
    return ActionSet(loss.actions, loss)


def randomized_increment(p, b, actions: ActionSet) -> np.ndarray:
    """``r_i = sum_j p_j l(y_j, b) - l(y_i, b)``; note ``<p, r> = 0``."""
    p = as_weights(p, actions.size)
    col = actions.column(b)
    return float(p @ col) - col


def sample_index(p: np.ndarray, u: float) -> int:
    """Inverse-CDF draw: the first index whose cumulative weight exceeds ``u``."""
    cdf = np.cumsum(p)
    return min(int(np.searchsorted(cdf, u, side="right")), p.size - 1)


@dataclass(frozen=True, eq=False)
class RandomizedState:
    x: np.ndarray
    round: int
    horizon: int
    potential: object
    actions: ActionSet
    expected_loss: float = 0.0
    action_losses: np.ndarray = field(default=None)
    phi: float = field(default=None, repr=False)
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.phi is None or self.grad is None:
            phi, grad = self.potential.value_and_gradient(self.x)
            object.__setattr__(self, "phi", phi)
            object.__setattr__(self, "grad", grad)

    @classmethod
    def start(cls, potential, actions: ActionSet, horizon: int) -> "RandomizedState":
        if horizon < 1:
            raise DomainError("horizon must be at least 1")
        n = actions.size
        return cls(np.zeros(n), 0, horizon, potential, actions, 0.0, np.zeros(n))

    def expected_regret(self) -> float:
        return float(self.expected_loss - self.action_losses.min())


@dataclass(frozen=True)
class RandomizedRound:
    round: int
    distribution: tuple
    sampled_action_index: int
    outcome: float
    expected_increment: tuple
    sampled_loss: float
    blackwell: float
    telescoping: float


def randomized_step(state: RandomizedState, b, rng: np.random.Generator, check: bool = True):
    """One round: distribution from the potential, one uniform draw from ``rng``."""
    if state.round >= state.horizon:
        raise SequencingError(f"horizon {state.horizon} exhausted")
    p = normalize_gradient(state.grad)
    col = state.actions.column(b)
    expected = float(p @ col)
    r = expected - col
    idx = sample_index(p, rng.random())
    P = state.potential
    blackwell = float(state.grad @ r)
    x_new = state.x + r / math.sqrt(state.horizon)
    phi_new, grad_new = P.value_and_gradient(x_new)
    tele = -P.c / state.horizon + phi_new - state.phi
    if check and (blackwell > ROUND_TOL or tele > ROUND_TOL):
        raise InvariantViolation(
            f"round {state.round}: blackwell={blackwell!r} telescoping={tele!r}", state.round)
    new = RandomizedState(
        x=x_new,
        round=state.round + 1,
        horizon=state.horizon,
        potential=P,
        actions=state.actions,
        expected_loss=state.expected_loss + expected,
        action_losses=state.action_losses + col,
        phi=phi_new,
        grad=grad_new,
    )
    rec = RandomizedRound(
        round=state.round,
        distribution=tuple(p.tolist()),
        sampled_action_index=idx,
        outcome=b,
        expected_increment=tuple(r.tolist()),
        sampled_loss=float(col[idx]),
        blackwell=blackwell,
        telescoping=float(tele),
    )
    return new, rec


def _totals(rounds, actions: ActionSet):
    own = 0.0
    sampled = 0.0
    fixed = None
    for rd in rounds:
        col = actions.column(rd.outcome)
        own = own + float(np.asarray(rd.distribution) @ col)
        sampled = sampled + rd.sampled_loss
        fixed = col if fixed is None else fixed + col
    return own, sampled, fixed


def expected_regret(rounds: Sequence[RandomizedRound], actions: ActionSet) -> float:
    """Distribution-weighted loss minus the best fixed action's loss."""
    own, _, fixed = _totals(rounds, actions)
    return 0.0 if fixed is None else float(own - fixed.min())


def sampled_regret(rounds: Sequence[RandomizedRound], actions: ActionSet) -> float:
    _, sampled, fixed = _totals(rounds, actions)
    return 0.0 if fixed is None else float(sampled - fixed.min())


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every randomized draw."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class RandomizedResult:
    rounds: list
    state: RandomizedState
    expected_regret: float
    sampled_regret: float
    bound: float

    @property
    def bound_satisfied(self) -> bool:
        return self.expected_regret <= self.bound + IDENTITY_TOL


def run_randomized(potential, actions: ActionSet, outcomes: Sequence, seed: int = 0) -> RandomizedResult:
    if not len(outcomes):
        raise SequencingError("empty outcome stream")
    n = len(outcomes)
    rng = make_rng(seed)
    state = RandomizedState.start(potential, actions, n)
    rounds = []
    for b in outcomes:
        state, rec = randomized_step(state, b, rng)
        rounds.append(rec)
    const = bound_constant(potential, actions.size)
    return RandomizedResult(
        rounds=rounds,
        state=state,
        expected_regret=state.expected_regret(),
        sampled_regret=sampled_regret(rounds, actions),
        bound=const * math.sqrt(n),
    )


def replay_sampled_regrets(rounds: Sequence[RandomizedRound], actions: ActionSet, seeds: Sequence[int]) -> np.ndarray:
    """Sampled regret of the recorded distributions under each replay seed.

    The distributions do not depend on earlier draws, so a replay only
    redraws the action indices. Seed ``s`` reproduces exactly the draws
    ``run_randomized(..., seed=s)`` makes.
    """
    n = len(rounds)
    D = np.array([rd.distribution for rd in rounds])
    cdf = np.cumsum(D, axis=1)
    cols = np.array([actions.column(rd.outcome) for rd in rounds])
    best = cols.sum(axis=0).min()
    out = np.empty(len(seeds))
    for k, s in enumerate(seeds):
        u = make_rng(s).random(n)
        idx = np.minimum((cdf <= u[:, None]).sum(axis=1), actions.size - 1)
        out[k] = cols[np.arange(n), idx].sum() - best
    return out


def run_randomized_batch(potential, actions: ActionSet, outcome_streams) -> dict:
    """Expected-regret play over many oblivious streams at once.

    ``outcome_streams`` is an ``(S, n)`` array of outcome *indices* into
    ``actions.loss.outcomes``. Returns per-stream expected regret and the
    worst Blackwell and potential-decrement values seen.
    """
    idx = np.asarray(outcome_streams, dtype=int)
    S, n = idx.shape
    L = actions.matrix
    X = np.zeros((S, actions.size))
    phi = potential.values(X)
    own = np.zeros(S)
    fixed = np.zeros((S, actions.size))
    worst_bw = -math.inf
    worst_tele = -math.inf
    scale = 1.0 / math.sqrt(n)
    for t in range(n):
        G = potential.gradients(X)
        p = G / G.sum(axis=1, keepdims=True)
        cols = L[:, idx[:, t]].T
        exp_loss = (p * cols).sum(axis=1)
        r = exp_loss[:, None] - cols
        worst_bw = max(worst_bw, float((G * r).sum(axis=1).max()))
        X = X + r * scale
        phi_new = potential.values(X)
        worst_tele = max(worst_tele, float((-potential.c / n + phi_new - phi).max()))
        phi = phi_new
        own += exp_loss
        fixed += cols
    return {
        "expected_regret": own - fixed.min(axis=1),
        "max_blackwell": worst_bw,
        "max_telescoping": worst_tele,
        "bound": bound_constant(potential, actions.size) * math.sqrt(n),
    }


def greedy_oblivious_outcomes(potential, actions: ActionSet, n: int) -> list:
    """An outcome sequence fixed in advance that attacks the forecaster.

    The distributions never depend on the sampled actions, so the whole
    play can be simulated offline with the outcome maximizing the next
    potential value (ties to the earlier outcome) chosen each round.
    """
    x = np.zeros(actions.size)
    scale = 1.0 / math.sqrt(n)
    out = []
    for _ in range(n):
        p = normalize_gradient(potential.gradient(x))
        best_b, best_v, best_x = None, -math.inf, None
        for b in actions.loss.outcomes:
            col = actions.column(b)
            x_b = x + (float(p @ col) - col) * scale
            v = potential.value(x_b)
            if v > best_v:
                best_b, best_v, best_x = b, v, x_b
        out.append(best_b)
        x = best_x
    return out
