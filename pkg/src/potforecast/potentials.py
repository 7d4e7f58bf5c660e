"""Potential functions, induced weights and numerical supersolution checks.

A potential ``Phi`` dominates the coordinate maximum, is nondecreasing in
every coordinate and carries a constant ``c`` bounding half its Hessian
quadratic form over the unit box. Any such potential gives a forecaster
whose scaled regret never exceeds ``c + Phi(0)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import DegenerateGradientError, DomainError, VertexScanRefused

CERT_TOL = 1e-12
FD_STEP = 1e-6
FD_RELTOL = 1e-6
MAX_VERTEX_DIM = 20
GRID_HALF_WIDTH = 3.0
_ZERO_GRADIENT = 1e-300


def default_eta(n_experts: int) -> float:
    """The rate minimizing ``eta/2 + ln(N)/eta``; 1.0 when N == 1."""
    if n_experts < 1:
        raise DomainError("need at least one expert")
    if n_experts == 1:
        return 1.0
    return math.sqrt(2.0 * math.log(n_experts))


def _logsumexp_rows(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))[..., 0]


def softmax(z: np.ndarray) -> np.ndarray:
    """Max-shifted softmax along the last axis."""
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ExponentialPotential:
    """``Phi(x) = (1/eta) * ln(sum_i exp(eta * x_i))`` with ``c = eta/2`` by default."""

    eta: float
    c: float = field(default=None)
    kind = "exponential"

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise DomainError(f"eta must be positive and finite, got {self.eta!r}")
        if self.c is None:
            object.__setattr__(self, "c", self.eta / 2.0)
        if self.c < 0:
            raise DomainError("hessian constant must be nonnegative")

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        z = self.eta * x
        m = z.max()
        return float((m + math.log(np.exp(z - m).sum())) / self.eta)

    def values(self, X: np.ndarray) -> np.ndarray:
        return _logsumexp_rows(self.eta * np.asarray(X, dtype=float)) / self.eta

    def value_and_gradient(self, x) -> tuple[float, np.ndarray]:
        z = self.eta * x
        m = z.max()
        e = np.exp(z - m)
        s = e.sum()
        return float((m + math.log(s)) / self.eta), e / s

    def gradient(self, x) -> np.ndarray:
        return softmax(self.eta * np.asarray(x, dtype=float))

    def gradients(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.eta * np.asarray(X, dtype=float))

    def hessian(self, x) -> np.ndarray:
        q = self.gradient(x)
        return self.eta * (np.diag(q) - np.outer(q, q))

    def hessian_form(self, x, h) -> float:
        q = self.gradient(x)
        h = np.asarray(h, dtype=float)
        return float(self.eta * (q @ (h * h) - (q @ h) ** 2))

    def hessian_forms(self, X: np.ndarray, H: np.ndarray) -> np.ndarray:
        """Forms for every (point, direction) pair; shape ``(len(X), len(H))``."""
        Q = self.gradients(X)
        return self.eta * (Q @ (H * H).T - (Q @ H.T) ** 2)

    def to_dict(self) -> dict:
        return {"kind": "exponential", "eta": self.eta, "c": self.c}


@dataclass(frozen=True)
class ScalarFunction:
    """A one-dimensional function with its first two derivatives (vectorized)."""

    f: Callable
    d1: Callable
    d2: Callable
    name: str = ""


@dataclass(frozen=True)
class CompositePotential:
    """``Phi(x) = psi(sum_i phi(x_i))`` with ``psi`` concave, ``phi`` convex.

    The Hessian form is replaced by the upper bound
    ``psi'(sum phi(x_k)) * sum_i phi''(x_i) h_i**2``.
    """

    psi: ScalarFunction
    phi: ScalarFunction
    c: float
    kind = "composite"

    def _inner(self, X):
        return self.phi.f(np.asarray(X, dtype=float)).sum(axis=-1)

    def value(self, x) -> float:
        return float(self.psi.f(self._inner(x)))

    def values(self, X) -> np.ndarray:
        return self.psi.f(self._inner(X))

    def value_and_gradient(self, x) -> tuple[float, np.ndarray]:
        return self.value(x), self.gradient(x)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.psi.d1(self._inner(x)) * self.phi.d1(x)

    def gradients(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.psi.d1(self._inner(X))[:, None] * self.phi.d1(X)

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = self._inner(x)
        g = self.phi.d1(x)
        return self.psi.d2(s) * np.outer(g, g) + self.psi.d1(s) * np.diag(self.phi.d2(x))

    def hessian_form(self, x, h) -> float:
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        return float(self.psi.d1(self._inner(x)) * (self.phi.d2(x) @ (h * h)))

    def hessian_forms(self, X, H) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.psi.d1(self._inner(X))[:, None] * (self.phi.d2(X) @ (H * H).T)


def exponential_composite(eta: float, c: float | None = None) -> CompositePotential:
    """The exponential potential written as ``psi = ln(.)/eta``, ``phi = exp(eta .)``."""
    phi = ScalarFunction(
        f=lambda t: np.exp(eta * t),
        d1=lambda t: eta * np.exp(eta * t),
        d2=lambda t: eta * eta * np.exp(eta * t),
        name=f"exp({eta}*t)",
    )
    psi = ScalarFunction(
        f=lambda s: np.log(s) / eta,
        d1=lambda s: 1.0 / (eta * s),
        d2=lambda s: -1.0 / (eta * s * s),
        name=f"ln(s)/{eta}",
    )
    return CompositePotential(psi=psi, phi=phi, c=eta / 2.0 if c is None else c)


def potential_from_dict(d: dict) -> ExponentialPotential:
    if d.get("kind") != "exponential":
        raise DomainError(f"only exponential potentials are serializable, got {d.get('kind')!r}")
    return ExponentialPotential(eta=float(d["eta"]), c=float(d["c"]) if d.get("c") is not None else None)


def potential_value(P, x) -> float:
    return P.value(x)


def potential_gradient(P, x) -> np.ndarray:
    return P.gradient(x)


def weights_from_potential(P, x, fallback: bool = True) -> np.ndarray:
    """Normalized gradient ``Phi_x / <Phi_x, 1>``.

    With a vanishing gradient every simplex point is admissible; uniform
    weights are returned, or ``DegenerateGradientError`` raised when
    ``fallback`` is False.
    """
    return normalize_gradient(P.gradient(x), fallback)


def normalize_gradient(g: np.ndarray, fallback: bool = True) -> np.ndarray:
    s = g.sum()
    if not s > _ZERO_GRADIENT:
        if not fallback:
            raise DegenerateGradientError(f"gradient sums to {s!r}")
        return np.full(g.shape, 1.0 / g.size)
    return g / s


def hessian_quadratic_form(P, x, h) -> float:
    h = np.asarray(h, dtype=float)
    if np.any(np.abs(h) > 1):
        raise DomainError("directions must satisfy |h_i| <= 1")
    return P.hessian_form(x, h)


def bound_constant(P, n_experts: int) -> float:
    """``c + Phi(0)``: the guaranteed bound on regret divided by sqrt(n)."""
    return P.c + P.value(np.zeros(n_experts))


def sign_vertices(n: int) -> np.ndarray:
    if n > MAX_VERTEX_DIM:
        raise VertexScanRefused(
            f"2^{n} sign vectors requested; use sampled directions for N > {MAX_VERTEX_DIM}")
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def box_grid(n: int, per_axis: int, half_width: float = GRID_HALF_WIDTH) -> np.ndarray:
    if per_axis <= 0:
        return np.empty((0, n))
    if per_axis ** n > 1_000_000:
        raise DomainError(f"grid of {per_axis}^{n} points is too large")
    axis = np.linspace(-half_width, half_width, per_axis) if per_axis > 1 else np.zeros(1)
    return np.array(list(itertools.product(axis, repeat=n)))


@dataclass(frozen=True)
class SupersolutionReport:
    points_checked: int
    max_domination_violation: float
    max_hessian_excess: float
    gradient_check_max_relerror: float
    min_gradient: float
    passed: bool

    def summary(self) -> str:
        return (
            f"points_checked={self.points_checked} "
            f"max_domination_violation={self.max_domination_violation!r} "
            f"max_hessian_excess={self.max_hessian_excess!r} "
            f"gradient_check_max_relerror={self.gradient_check_max_relerror!r} "
            f"min_gradient={self.min_gradient!r} passed={str(self.passed).lower()}"
        )


def _fd_gradient_relerror(P, X: np.ndarray, step: float) -> np.ndarray:
    m, n = X.shape
    fd = np.empty_like(X)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        fd[:, i] = (P.values(X + e) - P.values(X - e)) / (2 * step)
    G = P.gradients(X)
    scale = np.maximum(np.abs(G).max(axis=1), _ZERO_GRADIENT)
    return np.abs(fd - G).max(axis=1) / scale


def certify_supersolution(
    P,
    sample_points: Iterable,
    grid_per_axis: int = 0,
    sampled_h: int | None = None,
    seed: int = 0,
) -> SupersolutionReport:
    """Check domination, monotonicity, the Hessian constant and the gradient.

    The Hessian bound is scanned over all sign vectors ``h`` in {-1, 1}^N:
    the forms used here are convex in ``h``, so their maximum over the unit
    box sits on a vertex. For ``N > 20`` pass ``sampled_h`` to draw that
    many random sign vectors instead.
    """
    pts = [np.asarray(x, dtype=float) for x in sample_points]
    if not pts:
        raise DomainError("certification needs at least one sample point")
    X = np.vstack(pts)
    n = X.shape[1]
    grid = box_grid(n, grid_per_axis)
    if len(grid):
        X = np.vstack([X, grid])

    if sampled_h is None:
        H = sign_vertices(n)
    else:
        rng = np.random.Generator(np.random.Philox(seed))
        H = rng.choice((-1.0, 1.0), size=(sampled_h, n))

    dom = float((X.max(axis=1) - P.values(X)).max())
    G = P.gradients(X)
    min_grad = float(G.min())
    excess = -math.inf
    for chunk in np.array_split(np.arange(len(X)), max(1, len(X) * len(H) // 2_000_000 + 1)):
        forms = P.hessian_forms(X[chunk], H)
        excess = max(excess, float((0.5 * forms).max() - P.c))
    relerr = float(_fd_gradient_relerror(P, X, FD_STEP).max())
    passed = (
        dom <= CERT_TOL
        and excess <= CERT_TOL
        and min_grad >= -CERT_TOL
        and relerr <= FD_RELTOL
    )
    return SupersolutionReport(
        points_checked=len(X),
        max_domination_violation=dom,
        max_hessian_excess=excess,
        gradient_check_max_relerror=relerr,
        min_gradient=min_grad,
        passed=passed,
    )
