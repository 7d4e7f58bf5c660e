"""Potential-based weighted average forecaster with per-round auditing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import LossFunction, evaluate_loss, combine_advice, IDENTITY_TOL
from .errors import DomainError, InvariantViolation, SequencingError
from .potentials import bound_constant, normalize_gradient, softmax

ROUND_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ForecasterState:
    """Scaled regret state after ``round`` of ``horizon`` rounds.

    ``x`` moves by ``r / sqrt(horizon)`` each round. The running loss
    totals are kept alongside so the regret can be read off directly and
    so the cumulative-loss form of the exponential weights can be checked.
    """

    x: np.ndarray
    round: int
    horizon: int
    potential: object
    loss: LossFunction
    forecaster_loss: float = 0.0
    expert_losses: np.ndarray = field(default=None)
    # cached Phi(x) and Phi_x(x)
    phi: float = field(default=None, repr=False)
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.phi is None or self.grad is None:
            phi, grad = self.potential.value_and_gradient(self.x)
            object.__setattr__(self, "phi", phi)
            object.__setattr__(self, "grad", grad)

    @classmethod
    def start(cls, potential, loss: LossFunction, horizon: int, n_experts: int) -> "ForecasterState":
        if horizon < 1:
            raise DomainError("horizon must be at least 1")
        if n_experts < 1:
            raise DomainError("need at least one expert")
        return cls(
            x=np.zeros(n_experts),
            round=0,
            horizon=horizon,
            potential=potential,
            loss=loss,
            forecaster_loss=0.0,
            expert_losses=np.zeros(n_experts),
        )

    @property
    def n_experts(self) -> int:
        return self.x.size

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.horizon)

    def regret(self) -> float:
        return float(self.forecaster_loss - self.expert_losses.min())


@dataclass(frozen=True)
class RoundRecord:
    round: int
    advice: tuple
    weights: tuple
    prediction: float
    outcome: float
    increments: tuple
    blackwell: float
    telescoping: float


def _check_advice(state: ForecasterState, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (state.n_experts,):
        raise DomainError(f"expected {state.n_experts} advices, got shape {f.shape}")
    lo, hi = state.loss.domain
    if state.loss.kind != "table" and (f.min() < lo or f.max() > hi):
        raise DomainError(f"advice outside prediction domain {state.loss.domain}")
    return f


def loss_softmax_weights(state: ForecasterState) -> np.ndarray:
    """Weights proportional to ``exp(-eta * L_i / sqrt(n))`` from cumulative expert losses."""
    return softmax(-state.potential.eta * state.expert_losses * state.scale)


def predict(state: ForecasterState, f) -> tuple[np.ndarray, float]:
    """Weights from the potential gradient and the resulting convex prediction."""
    if state.round >= state.horizon:
        raise SequencingError(f"horizon {state.horizon} exhausted")
    f = _check_advice(state, f)
    w = normalize_gradient(state.grad)
    if getattr(state.potential, "kind", None) == "exponential":
        alt = loss_softmax_weights(state)
        gap = float(np.abs(w - alt).max())
        if gap > IDENTITY_TOL:
            raise InvariantViolation(
                f"gradient weights differ from cumulative-loss weights by {gap!r}",
                state.round)
    return w, combine_advice(w, f)


def observe(state: ForecasterState, f, b, check: bool = True) -> tuple[ForecasterState, RoundRecord]:
    """Play one round: predict, see outcome ``b``, update the state.

    With ``check`` the Blackwell inequality ``<Phi_x(x), r> <= 0`` and the
    potential decrement ``-c/n + Phi(x') - Phi(x) <= 0`` are enforced at
    ``1e-12``; a violation raises ``InvariantViolation``.
    """
    w, a = predict(state, f)
    f = np.asarray(f, dtype=float)
    loss = state.loss
    la = evaluate_loss(loss, a, b)
    if loss.kind == "table":
        lf = loss.evaluate_many(f, b)
    else:
        lf = loss._unchecked_many(f, b)
    r = la - lf
    P = state.potential
    blackwell = float(state.grad @ r)
    x_new = state.x + r * state.scale
    phi_new, grad_new = P.value_and_gradient(x_new)
    tele = -P.c / state.horizon + phi_new - state.phi
    if check:
        if blackwell > ROUND_TOL:
            raise InvariantViolation(
                f"Blackwell inequality fails at round {state.round}: {blackwell!r}", state.round)
        if tele > ROUND_TOL:
            raise InvariantViolation(
                f"potential increased at round {state.round}: {tele!r}", state.round)
    new = ForecasterState(
        x=x_new,
        round=state.round + 1,
        horizon=state.horizon,
        potential=P,
        loss=loss,
        forecaster_loss=state.forecaster_loss + la,
        expert_losses=state.expert_losses + lf,
        phi=phi_new,
        grad=grad_new,
    )
    rec = RoundRecord(
        round=state.round,
        advice=tuple(f.tolist()),
        weights=tuple(w.tolist()),
        prediction=float(a),
        outcome=b,
        increments=tuple(r.tolist()),
        blackwell=blackwell,
        telescoping=float(tele),
    )
    return new, rec


@dataclass
class ForecastResult:
    rounds: list
    state: ForecasterState
    regret: float
    bound: float
    max_blackwell: float
    max_telescoping: float

    @property
    def bound_satisfied(self) -> bool:
        return self.regret <= self.bound + IDENTITY_TOL


def run_forecast(potential, loss: LossFunction, advice_stream: Sequence, outcome_stream: Sequence) -> ForecastResult:
    """Run the forecaster over fixed advice and outcome streams."""
    if len(advice_stream) != len(outcome_stream):
        raise SequencingError(
            f"{len(advice_stream)} advice rows for {len(outcome_stream)} outcomes")
    if not len(advice_stream):
        raise SequencingError("empty streams")
    n = len(outcome_stream)
    state = ForecasterState.start(potential, loss, n, len(advice_stream[0]))
    rounds = []
    for f, b in zip(advice_stream, outcome_stream):
        state, rec = observe(state, f, b)
        rounds.append(rec)
    const = bound_constant(potential, state.n_experts)
    terminal = potential.value(state.x)
    if not (state.x.max() <= terminal <= const + IDENTITY_TOL):
        raise InvariantViolation(
            f"terminal potential {terminal!r} exceeds c + Phi(0) = {const!r}", n)
    return ForecastResult(
        rounds=rounds,
        state=state,
        regret=state.regret(),
        bound=const * math.sqrt(n),
        max_blackwell=max(r.blackwell for r in rounds),
        max_telescoping=max(r.telescoping for r in rounds),
    )
