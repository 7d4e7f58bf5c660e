"""Exact worst-case regret of tiny discretized games, by backward induction.

The value of the game

    v(t, x) = max_f min_p max_b v(t + 1, x + r(p, f, b) / sqrt(n)),
    v(n, x) = max_i x_i,

is computed over finite grids of advice vectors ``f``, weights ``p`` and
outcomes ``b``. Losses on grid points are rational, so every reachable
state is ``x0 + S / (D * sqrt(n))`` with ``S`` an integer vector and ``D``
a common denominator. Each level is held as a dense table over a box of
integer offsets, so the recursion is memoized on the exact state and
shifts become array slices.

Discretization moves the value in known directions: a coarser weight grid
can only raise it, coarser advice or outcome grids can only lower it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np

from .core import LossFunction, evaluate_loss, regret_increment, simplex_grid
from .errors import BudgetExceeded, DomainError
from .potentials import bound_constant, normalize_gradient

MAX_HORIZON = 6
MAX_EXPERTS = 3
MAX_ADVICE_POINTS = 5
MAX_OUTCOMES = 3
MAX_SIMPLEX_STEPS = 20
WORK_BUDGET = 10 ** 8
TABLE_BUDGET = 5 * 10 ** 7
BRUTE_FORCE_BUDGET = 10 ** 5
STRATEGY_TREE_BUDGET = 2 * 10 ** 6
CHAIN_TOL = 1e-9


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(v)


@dataclass(frozen=True)
class DiscreteGameSpec:
    horizon: int
    n_experts: int
    advice_grid: tuple = (Fraction(0), Fraction(1, 2), Fraction(1))
    simplex_steps: int = 20
    outcomes: tuple = (0, 1)
    loss_kind: str = "absolute"

    def __post_init__(self):
        object.__setattr__(self, "advice_grid", tuple(sorted({_frac(a) for a in self.advice_grid})))
        object.__setattr__(self, "outcomes", tuple(sorted({_frac(b) for b in self.outcomes})))
        if not 1 <= self.horizon <= MAX_HORIZON:
            raise DomainError(f"horizon must be in [1, {MAX_HORIZON}]")
        if not 1 <= self.n_experts <= MAX_EXPERTS:
            raise DomainError(f"expert count must be in [1, {MAX_EXPERTS}]")
        if not 1 <= len(self.advice_grid) <= MAX_ADVICE_POINTS:
            raise DomainError(f"advice grid must hold 1..{MAX_ADVICE_POINTS} points")
        if not 1 <= len(self.outcomes) <= MAX_OUTCOMES:
            raise DomainError(f"outcome set must hold 1..{MAX_OUTCOMES} points")
        if not 1 <= self.simplex_steps <= MAX_SIMPLEX_STEPS:
            raise DomainError(f"simplex steps must be in [1, {MAX_SIMPLEX_STEPS}]")
        loss = self.loss  # validates kind and domain
        if any(a < 0 or a > 1 for a in self.advice_grid):
            raise DomainError("advice grid must lie in [0, 1]")
        del loss

    @property
    def loss(self) -> LossFunction:
        return LossFunction(kind=self.loss_kind, domain=(0.0, 1.0), outcomes=self.outcomes)

    @property
    def advice_vectors(self) -> list:
        return list(itertools.product(self.advice_grid, repeat=self.n_experts))

    @property
    def weight_grid(self) -> list:
        return simplex_grid(self.n_experts, self.simplex_steps, exact=True)

    @property
    def tree_size(self) -> int:
        b = len(self.advice_vectors) * len(self.weight_grid) * len(self.outcomes)
        return sum(b ** k for k in range(self.horizon + 1))


def terminal_value(x0, sums, horizon: int) -> float:
    """``max_i (x0_i + sums_i / sqrt(n))`` with exact rational ``sums``.

    Both evaluation routes call this, so they agree bit for bit.
    """
    root = math.sqrt(horizon)
    return max(float(x) + float(s) / root for x, s in zip(x0, sums))


@dataclass
class _Lattice:
    denom: int
    radius: int
    # per advice vector: distinct tuples (over p) of per-outcome integer increments
    branches: list
    increments: set = field(default_factory=set)


def _lattice(spec: DiscreteGameSpec) -> _Lattice:
    loss = spec.loss
    table = {}
    for f in spec.advice_vectors:
        for p in spec.weight_grid:
            for b in spec.outcomes:
                table[f, p, b] = regret_increment(p, f, b, loss)
    denom = reduce(math.lcm, (r.denominator for rs in table.values() for r in rs), 1)
    branches = []
    incs = set()
    radius = 0
    for f in spec.advice_vectors:
        seen = set()
        for p in spec.weight_grid:
            key = tuple(tuple(int(r * denom) for r in table[f, p, b]) for b in spec.outcomes)
            seen.add(key)
            for d in key:
                incs.add(d)
                radius = max(radius, max(abs(v) for v in d))
        branches.append(sorted(seen))
    return _Lattice(denom, radius, branches, incs)


def _shift(arr: np.ndarray, d, offset: int, width: int) -> np.ndarray:
    return arr[tuple(slice(offset + di, offset + di + width) for di in d)]


class MinimaxSolver:
    """Backward induction for one :class:`DiscreteGameSpec`.

    Tables are cached per query origin ``(t0, x0)``; ``tables[k]`` holds the
    value at round ``t0 + k`` over offsets ``-rho_k..rho_k`` per coordinate.
    """

    def __init__(self, spec: DiscreteGameSpec, work_budget: int = WORK_BUDGET):
        self.spec = spec
        self.lattice = _lattice(spec)
        self.work_budget = work_budget
        self._cache = {}

    def required_work(self, t0: int = 0) -> tuple[int, int]:
        """(elementwise work, largest table size) for a query at round ``t0``."""
        lat = self.lattice
        N = self.spec.n_experts
        per_state = sum(len(br) * len(self.spec.outcomes) for br in lat.branches)
        steps = self.spec.horizon - t0
        work = sum((2 * lat.radius * k + 1) ** N * per_state for k in range(steps))
        return work, (2 * lat.radius * steps + 1) ** N

    def _check_budget(self, t0: int):
        work, table = self.required_work(t0)
        if work > self.work_budget or table > TABLE_BUDGET:
            raise BudgetExceeded(
                f"backward induction needs {work} operations and a {table}-entry table; "
                f"budget is {self.work_budget} operations / {TABLE_BUDGET} entries",
                required=work, budget=self.work_budget)

    def tables(self, t0: int, x0) -> list:
        spec = self.spec
        x0 = tuple(float(v) for v in x0)
        if len(x0) != spec.n_experts:
            raise DomainError(f"state must have {spec.n_experts} coordinates")
        if not 0 <= t0 <= spec.horizon:
            raise DomainError(f"round must be in [0, {spec.horizon}]")
        key = (t0, x0)
        if key in self._cache:
            return self._cache[key]
        self._check_budget(t0)
        lat = self.lattice
        N, n, R = spec.n_experts, spec.horizon, lat.radius
        steps = n - t0
        rho = R * steps
        # terminal table
        root = math.sqrt(n)
        axes = [x0[i] + (np.arange(-rho, rho + 1) / lat.denom) / root for i in range(N)]
        V = reduce(np.maximum, np.meshgrid(*axes, indexing="ij"))
        out = [None] * (steps + 1)
        out[steps] = V
        for k in range(steps - 1, -1, -1):
            width = 2 * R * k + 1
            nxt = out[k + 1]
            best = np.full((width,) * N, -np.inf)
            for branch_set in lat.branches:
                worst = np.full((width,) * N, np.inf)
                for branch in branch_set:
                    m = _shift(nxt, branch[0], R, width)
                    for d in branch[1:]:
                        m = np.maximum(m, _shift(nxt, d, R, width))
                    worst = np.minimum(worst, m)
                best = np.maximum(best, worst)
            out[k] = best
        self._cache[key] = out
        return out

    def value(self, t: int, x) -> float:
        if t == self.spec.horizon:
            return terminal_value(x, [0] * len(x), self.spec.horizon)
        return float(self.tables(t, x)[0].reshape(-1)[0])

    def reachable(self, t0: int = 0) -> list:
        """Boolean masks of offsets reachable from the origin, aligned with ``tables``."""
        lat = self.lattice
        N = self.spec.n_experts
        steps = self.spec.horizon - t0
        R = lat.radius
        masks = [np.ones((1,) * N, dtype=bool)]
        for k in range(1, steps + 1):
            width = 2 * R * k + 1
            m = np.zeros((width,) * N, dtype=bool)
            prev = masks[-1]
            pw = prev.shape[0]
            for d in lat.increments:
                sl = tuple(slice(R + di, R + di + pw) for di in d)
                m[sl] |= prev
            masks.append(m)
        return masks

    def value_rows(self, t0: int = 0, x0=None):
        """Rows ``(t, x_1..x_N, value)`` for every reachable state."""
        spec = self.spec
        x0 = tuple(0.0 for _ in range(spec.n_experts)) if x0 is None else tuple(float(v) for v in x0)
        tabs = self.tables(t0, x0)
        masks = self.reachable(t0)
        root = math.sqrt(spec.horizon)
        rows = []
        for k, (tab, mask) in enumerate(zip(tabs, masks)):
            rho = (tab.shape[0] - 1) // 2
            for idx in zip(*np.nonzero(mask)):
                x = [x0[i] + ((int(idx[i]) - rho) / self.lattice.denom) / root
                     for i in range(spec.n_experts)]
                rows.append((t0 + k, *x, float(tab[idx])))
        return rows


def minimax_value(spec: DiscreteGameSpec, t: int = 0, x=None) -> float:
    """Worst-case scaled regret from round ``t`` and state ``x`` (default 0)."""
    x = [0.0] * spec.n_experts if x is None else list(x)
    return MinimaxSolver(spec).value(t, x)


def brute_force_value(spec: DiscreteGameSpec, t: int = 0, x=None) -> float:
    """Plain max-min-max enumeration with exact rational increments, no memo.

    An independent check on :class:`MinimaxSolver`; limited to small trees.
    """
    x = [0.0] * spec.n_experts if x is None else list(x)
    steps = spec.horizon - t
    b = len(spec.advice_vectors) * len(spec.weight_grid) * len(spec.outcomes)
    nodes = sum(b ** k for k in range(steps + 1))
    if nodes > BRUTE_FORCE_BUDGET:
        raise BudgetExceeded(f"enumeration tree has {nodes} nodes", required=nodes,
                             budget=BRUTE_FORCE_BUDGET)
    loss = spec.loss
    fs = spec.advice_vectors
    ps = spec.weight_grid

    def rec(level, sums):
        if level == spec.horizon:
            return terminal_value(x, sums, spec.horizon)
        best = -math.inf
        for f in fs:
            worst = math.inf
            for p in ps:
                a = sum(pi * fi for pi, fi in zip(p, f))
                top = -math.inf
                for o in spec.outcomes:
                    la = evaluate_loss(loss, a, o)
                    nxt = [s + la - evaluate_loss(loss, fi, o) for s, fi in zip(sums, f)]
                    top = max(top, rec(level + 1, nxt))
                worst = min(worst, top)
            best = max(best, worst)
        return best

    return rec(t, [Fraction(0)] * spec.n_experts)


def strategy_worst_case(spec: DiscreteGameSpec, potential, t: int = 0, x=None) -> float:
    """Worst case of the potential forecaster against every advice/outcome path.

    Weights are the normalized potential gradient (not restricted to the
    weight grid); advice and outcomes range over the spec's grids.
    """
    N, n = spec.n_experts, spec.horizon
    fs = np.array(spec.advice_vectors, dtype=float)
    outs = [float(o) for o in spec.outcomes]
    loss = LossFunction(kind=spec.loss_kind, domain=(0.0, 1.0), outcomes=tuple(outs))
    branch = len(fs) * len(outs)
    leaves = branch ** (n - t)
    if leaves > STRATEGY_TREE_BUDGET:
        raise BudgetExceeded(f"strategy tree has {leaves} leaves", required=leaves,
                             budget=STRATEGY_TREE_BUDGET)
    scale = 1.0 / math.sqrt(n)
    X = np.zeros((1, N)) if x is None else np.asarray(x, dtype=float).reshape(1, N)
    levels = [X]
    # per (f, b): expert losses are fixed
    Lf = np.array([[loss.evaluate_many(f, b) for b in outs] for f in fs])  # (F, B, N)
    for _ in range(t, n):
        G = potential.gradients(X)
        W = G / G.sum(axis=1, keepdims=True)
        A = np.clip(W @ fs.T, 0.0, 1.0)  # (M, F)
        la = np.stack([loss._unchecked_many(A, b) for b in outs], axis=-1)  # (M, F, B)
        R = la[..., None] - Lf[None]  # (M, F, B, N)
        X = (X[:, None, None, :] + R * scale).reshape(-1, N)
        levels.append(X)
    V = X.max(axis=1)
    for _ in range(t, n):
        V = V.reshape(-1, branch).max(axis=1)
    return float(V[0])


@dataclass(frozen=True)
class BoundAudit:
    minimax: float
    strategy: float
    bound: float

    @property
    def lower_holds(self) -> bool:
        return self.minimax <= self.strategy + CHAIN_TOL

    @property
    def upper_holds(self) -> bool:
        return self.strategy <= self.bound + CHAIN_TOL

    @property
    def holds(self) -> bool:
        return self.lower_holds and self.upper_holds

    def summary(self) -> str:
        return (f"minimax={self.minimax!r} <= strategy={self.strategy!r} <= bound={self.bound!r}: "
                f"{'holds' if self.holds else 'FAILS'}")


def bound_audit(spec: DiscreteGameSpec, potential) -> BoundAudit:
    """Check ``minimax value <= potential strategy's worst case <= c + Phi(0)``."""
    return BoundAudit(
        minimax=minimax_value(spec),
        strategy=strategy_worst_case(spec, potential),
        bound=bound_constant(potential, spec.n_experts),
    )


def evaluate_G_randomized(gamma, S, actions, simplex_steps: int = 20) -> float:
    """Grid evaluation of ``(1/2) min_{p in Gamma(gamma)} max_b <S r(p,b), r(p,b)>``.

    ``Gamma(gamma)`` is the set of weights with ``<gamma, r(p, b)> <= 0`` for
    every outcome. The normalized ``gamma`` is always added to the grid.
    """
    gamma = np.asarray(gamma, dtype=float)
    S = np.asarray(S, dtype=float)
    N = actions.size
    if gamma.shape != (N,) or S.shape != (N, N):
        raise DomainError("gamma and S must match the action count")
    if gamma.min() < 0:
        raise DomainError("gamma must be nonnegative")
    grid = simplex_grid(N, simplex_steps)
    if gamma.sum() > 0:
        grid.append(gamma / gamma.sum())
    Pm = np.array(grid)
    L = actions.matrix  # (N, B)
    expected = Pm @ L  # (M, B)
    R = expected[:, :, None] - L.T[None]  # (M, B, N)
    feasible = (R @ gamma).max(axis=1) <= 1e-12
    if not feasible.any():
        raise DomainError("no grid point satisfies the Blackwell constraint")
    forms = 0.5 * np.einsum("mbi,ij,mbj->mb", R, S, R).max(axis=1)
    return float(forms[feasible].min())
