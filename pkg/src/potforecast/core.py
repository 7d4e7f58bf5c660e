"""Losses, simplex points and regret increments.

Everything here is a pure function of its arguments. Vectors are plain
numpy float arrays; the exact (``fractions.Fraction``) path used by the
minimax oracle goes through the same functions with Python sequences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

SIMPLEX_TOL = 1e-12
IDENTITY_TOL = 1e-9
_DOMAIN_SLACK = 1e-12

LOSS_KINDS = ("absolute", "squared", "table")


@dataclass(frozen=True)
class LossFunction:
    """A loss ``l(a, b)`` with values in [0, 1].

    ``absolute`` and ``squared`` are defined on the interval ``domain``;
    ``table`` is defined on the finite action set ``actions`` with
    ``table[i][k] = l(actions[i], outcomes[k])`` and need not be convex.
    """

    kind: str = "absolute"
    domain: tuple[float, float] = (0.0, 1.0)
    outcomes: tuple = (0, 1)
    actions: tuple = ()
    table: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise DomainError(f"unknown loss kind {self.kind!r}")
        if not self.outcomes:
            raise DomainError("outcome set must be nonempty")
        lo, hi = self.domain
        if lo > hi:
            raise DomainError(f"empty prediction domain {self.domain}")
        if self.kind == "table":
            if len(self.table) != len(self.actions) or not self.actions:
                raise DomainError("table loss needs one row per action")
            for row in self.table:
                if len(row) != len(self.outcomes):
                    raise DomainError("table row length must match outcomes")
                if any(v < 0 or v > 1 for v in row):
                    raise DomainError("table loss values must lie in [0, 1]")
        else:
            # a finite B and an interval A; losses must stay in [0, 1]
            for b in self.outcomes:
                if max(abs(lo - b), abs(hi - b)) > 1:
                    raise DomainError(
                        f"{self.kind} loss leaves [0, 1] for outcome {b} on {self.domain}")

    @property
    def is_convex(self) -> bool:
        return self.kind != "table"

    def _outcome_index(self, b) -> int:
        for k, o in enumerate(self.outcomes):
            if o == b:
                return k
        raise DomainError(f"outcome {b!r} not in {self.outcomes}")

    def _check_prediction(self, a):
        lo, hi = self.domain
        if isinstance(a, Fraction):
            if a < lo or a > hi:
                raise DomainError(f"prediction {a} outside {self.domain}")
            return a
        if not (lo - _DOMAIN_SLACK <= a <= hi + _DOMAIN_SLACK):
            raise DomainError(f"prediction {a!r} outside {self.domain}")
        return min(max(a, lo), hi)

    def __call__(self, a, b):
        return evaluate_loss(self, a, b)

    def evaluate_many(self, a: np.ndarray, b) -> np.ndarray:
        """Vectorized ``l(a_i, b)`` for a float array of predictions."""
        self._outcome_index(b)
        a = np.asarray(a, dtype=float)
        if self.kind == "table":
            return np.array([evaluate_loss(self, float(v), b) for v in a])
        lo, hi = self.domain
        if a.size and (a.min() < lo - _DOMAIN_SLACK or a.max() > hi + _DOMAIN_SLACK):
            raise DomainError(f"prediction outside {self.domain}")
        return self._unchecked_many(np.clip(a, lo, hi), b)

    def _unchecked_many(self, a: np.ndarray, b) -> np.ndarray:
        # caller guarantees a in domain and b in outcomes
        d = a - b
        return np.abs(d) if self.kind == "absolute" else d * d

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "domain": list(self.domain), "outcomes": list(self.outcomes)}
        if self.kind == "table":
            d["actions"] = list(self.actions)
            d["table"] = [list(row) for row in self.table]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LossFunction":
        return cls(
            kind=d["kind"],
            domain=tuple(d.get("domain", (0.0, 1.0))),
            outcomes=tuple(d.get("outcomes", (0, 1))),
            actions=tuple(d.get("actions", ())),
            table=tuple(tuple(r) for r in d.get("table", ())),
        )


def absolute_loss() -> LossFunction:
    return LossFunction("absolute")


def squared_loss() -> LossFunction:
    return LossFunction("squared")


def make_loss(kind: str) -> LossFunction:
    if kind not in ("absolute", "squared"):
        raise DomainError(f"unknown loss {kind!r}; expected 'absolute' or 'squared'")
    return LossFunction(kind)


def evaluate_loss(loss: LossFunction, a, b):
    """``l(a, b)``; exact for ``Fraction`` inputs."""
    k = loss._outcome_index(b)
    if loss.kind == "table":
        for i, y in enumerate(loss.actions):
            if y == a:
                return loss.table[i][k]
        raise DomainError(f"action {a!r} not in {loss.actions}")
    a = loss._check_prediction(a)
    d = a - b
    return abs(d) if loss.kind == "absolute" else d * d


def as_weights(p, n: int | None = None) -> np.ndarray:
    """Validate a simplex point and return it as a float array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise DomainError("weights must be a nonempty 1-d vector")
    if n is not None and p.size != n:
        raise DomainError(f"expected {n} weights, got {p.size}")
    if not np.all(np.isfinite(p)) or p.min() < 0:
        raise DomainError("weights must be finite and nonnegative")
    if abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise DomainError(f"weights sum to {p.sum()!r}, not 1")
    return p


def as_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("state must be a nonempty 1-d vector")
    if not np.all(np.isfinite(x)):
        raise DomainError("state entries must be finite")
    return x


def combine_advice(p, f):
    """Forecaster prediction ``<p, f>``.

    Float arrays go through ``np.dot``; other sequences (e.g. of
    ``Fraction``) are summed exactly in Python.
    """
    if len(p) != len(f):
        raise DomainError(f"{len(p)} weights for {len(f)} advices")
    if isinstance(p, np.ndarray) and isinstance(f, np.ndarray):
        return float(np.dot(p, f))
    total = 0
    for pi, fi in zip(p, f):
        total = total + pi * fi
    return total


def regret_increment(p, f, b, loss: LossFunction):
    """Per-expert instantaneous regret ``l(<p,f>, b) - l(f^i, b)``.

    Returns a float array, or a tuple of ``Fraction`` for exact inputs.
    """
    a = combine_advice(p, f)
    la = evaluate_loss(loss, a, b)
    if isinstance(f, np.ndarray) and loss.kind != "table":
        return la - loss.evaluate_many(f, b)
    return tuple(la - evaluate_loss(loss, fi, b) for fi in f)


def jensen_gap(p, f, b, loss: LossFunction) -> float:
    """``<p, r(p,f,b)>``; nonpositive for convex losses."""
    return float(np.dot(p, regret_increment(np.asarray(p, float), np.asarray(f, float), b, loss)))


def cumulative_regret(rounds: Iterable, loss: LossFunction) -> float:
    """Forecaster cumulative loss minus the best expert's cumulative loss.

    ``rounds`` yields objects with ``weights``, ``advice`` and ``outcome``.
    Accumulation order matches :class:`potforecast.forecaster.ForecasterState`
    so both give bit-identical totals.
    """
    own = 0.0
    experts = None
    for rd in rounds:
        f = np.asarray(rd.advice, dtype=float)
        a = combine_advice(np.asarray(rd.weights, dtype=float), f)
        own = own + evaluate_loss(loss, a, rd.outcome)
        lf = loss.evaluate_many(f, rd.outcome)
        experts = lf if experts is None else experts + lf
    if experts is None:
        return 0.0
    return float(own - experts.min())


def best_expert(expert_losses: Sequence[float]) -> int:
    """Index of the smallest cumulative loss; ties go to the lowest index."""
    return int(np.argmin(expert_losses))


def simplex_grid(n: int, steps: int, exact: bool = False) -> list:
    """All points of the simplex in ``n`` coordinates with spacing ``1/steps``."""
    if n < 1 or steps < 1:
        raise DomainError("need n >= 1 and steps >= 1")
    out = []

    def rec(prefix, left, slots):
        if slots == 1:
            out.append(prefix + [left])
            return
        for k in range(left, -1, -1):
            rec(prefix + [k], left - k, slots - 1)

    rec([], steps, n)
    if exact:
        return [tuple(Fraction(k, steps) for k in pt) for pt in out]
    return [np.array(pt, dtype=float) / steps for pt in out]


def scaled_state_regret(x, horizon: int) -> float:
    """``sqrt(n) * max_i x_i``; the regret encoded by a scaled state."""
    return math.sqrt(horizon) * float(np.max(x))
