"""Repeated prediction game: expert and adversary policies, transcripts, sweeps.

Order of play each round: the experts announce advice, the forecaster
picks its weights, then the adversary picks the outcome knowing both.
"""
from __future__ import annotations

import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import IDENTITY_TOL, LossFunction, cumulative_regret
from .errors import DomainError, InvariantViolation
from .forecaster import ForecasterState, RoundRecord, observe, predict
from .potentials import ExponentialPotential, bound_constant, default_eta, normalize_gradient
from .randomized import (
    ActionSet,
    RandomizedRound,
    RandomizedState,
    expected_regret,
    grid_actions,
    randomized_step,
)

EXPERT_POLICIES = ("fixed_table", "seeded_random", "constant_grid")
ADVERSARY_POLICIES = ("oblivious_seeded", "greedy", "minimax_lookahead")
MODES = ("averaged", "randomized")
LOOKAHEAD_BUDGET = 4096
TRANSCRIPT_FORMAT = "potforecast-transcript/1"


@dataclass(frozen=True)
class GameConfig:
    horizon: int
    n_experts: int
    loss: LossFunction = field(default_factory=LossFunction)
    eta: float | None = None
    c: float | None = None
    expert_policy: str = "seeded_random"
    adversary_policy: str = "greedy"
    lookahead_depth: int = 2
    seed: int = 0
    mode: str = "averaged"
    advice_table: tuple = ()

    def __post_init__(self):
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise DomainError(f"horizon must be a positive integer, got {self.horizon!r}")
        if not isinstance(self.n_experts, int) or self.n_experts < 1:
            raise DomainError(f"expert count must be a positive integer, got {self.n_experts!r}")
        if self.expert_policy not in EXPERT_POLICIES:
            raise DomainError(f"unknown expert policy {self.expert_policy!r}")
        if self.adversary_policy not in ADVERSARY_POLICIES:
            raise DomainError(f"unknown adversary policy {self.adversary_policy!r}")
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must fit in 64 bits")
        if self.mode == "randomized" and self.adversary_policy != "oblivious_seeded":
            raise DomainError("randomized mode plays against an oblivious adversary only")
        if self.adversary_policy == "minimax_lookahead":
            if self.lookahead_depth < 1:
                raise DomainError("lookahead depth must be at least 1")
            need = len(self.loss.outcomes) ** self.lookahead_depth
            if need > LOOKAHEAD_BUDGET:
                raise DomainError(
                    f"lookahead explores {need} outcome paths per round; budget is {LOOKAHEAD_BUDGET}")
        if self.expert_policy == "fixed_table":
            if not self.advice_table:
                raise DomainError("fixed_table policy needs an advice table")
            lo, hi = self.loss.domain
            for row in self.advice_table:
                if len(row) != self.n_experts or any(not lo <= v <= hi for v in row):
                    raise DomainError("advice table rows must hold one in-domain value per expert")
        if self.mode == "averaged" and self.loss.kind == "table":
            raise DomainError("averaged mode needs a convex interval loss")
        self.potential  # validates eta / c

    @property
    def potential(self) -> ExponentialPotential:
        eta = self.eta if self.eta is not None else default_eta(self.n_experts)
        return ExponentialPotential(eta=eta, c=self.c)

    @property
    def bound_value(self) -> float:
        return bound_constant(self.potential, self.n_experts) * math.sqrt(self.horizon)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "n_experts": self.n_experts,
            "loss": self.loss.to_dict(),
            "eta": self.eta,
            "c": self.c,
            "expert_policy": self.expert_policy,
            "adversary_policy": self.adversary_policy,
            "lookahead_depth": self.lookahead_depth,
            "seed": self.seed,
            "mode": self.mode,
            "advice_table": [list(r) for r in self.advice_table],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GameConfig":
        d = dict(d)
        d["loss"] = LossFunction.from_dict(d["loss"])
        d["advice_table"] = tuple(tuple(r) for r in d.get("advice_table", ()))
        return cls(**d)


def _rngs(seed: int):
    """Independent expert, adversary and action-draw streams from one seed."""
    return tuple(np.random.Generator(np.random.Philox(s))
                 for s in np.random.SeedSequence(seed).spawn(3))


def expert_policy(config: GameConfig, rng: np.random.Generator) -> Callable[[int], np.ndarray]:
    """Advice generator ``t -> f_t``; advice never depends on the forecaster's weights."""
    lo, hi = config.loss.domain
    N = config.n_experts
    if config.expert_policy == "fixed_table":
        table = np.array(config.advice_table, dtype=float)
        return lambda t: table[t % len(table)]
    if config.expert_policy == "constant_grid":
        grid = lo + (hi - lo) * (np.arange(N) / (N - 1) if N > 1 else np.zeros(1))
        return lambda t: grid
    return lambda t: lo + (hi - lo) * rng.random(N)


def greedy_adversary(p, f, x, loss: LossFunction, potential, horizon: int):
    """Outcome maximizing ``Phi(x + r(p, f, b) / sqrt(n))``; ties go to the smaller outcome."""
    p = np.asarray(p, dtype=float)
    f = np.asarray(f, dtype=float)
    a = float(p @ f)
    scale = 1.0 / math.sqrt(horizon)
    best_b, best_v = None, -math.inf
    for b in sorted(loss.outcomes):
        r = loss(a, b) - loss.evaluate_many(f, b)
        v = potential.value(x + r * scale)
        if v > best_v:
            best_b, best_v = b, v
    return best_b


def lookahead_adversary(state: ForecasterState, f, depth: int):
    """Outcome opening the ``depth``-round outcome path that maximizes the potential.

    Future advice is taken equal to the current ``f``; the forecaster's
    future weights are simulated exactly.
    """
    loss = state.loss
    P = state.potential
    f = np.asarray(f, dtype=float)
    scale = state.scale
    outcomes = sorted(loss.outcomes)

    def best(x, d):
        if d == 0:
            return P.value(x)
        a = float(normalize_gradient(P.gradient(x)) @ f)
        return max(best(x + (loss(a, b) - loss.evaluate_many(f, b)) * scale, d - 1) for b in outcomes)

    depth = min(depth, state.horizon - state.round)
    a = float(normalize_gradient(state.grad) @ f)
    best_b, best_v = None, -math.inf
    for b in outcomes:
        v = best(state.x + (loss(a, b) - loss.evaluate_many(f, b)) * scale, depth - 1)
        if v > best_v:
            best_b, best_v = b, v
    return best_b


@dataclass(frozen=True)
class GameTranscript:
    config: GameConfig
    rounds: tuple
    regret: float
    bound_value: float
    bound_satisfied: bool
    max_blackwell: float
    max_telescoping: float
    aborted_round: int | None = None
    diagnostic: str = ""

    @property
    def aborted(self) -> bool:
        return self.aborted_round is not None


def _round_fields(rec) -> list:
    if isinstance(rec, RoundRecord):
        return [rec.round, *rec.advice, *rec.weights, rec.prediction, rec.outcome,
                *rec.increments, rec.blackwell, rec.telescoping]
    return [rec.round, *rec.distribution, rec.sampled_action_index, rec.outcome,
            *rec.expected_increment, rec.sampled_loss, rec.blackwell, rec.telescoping]


def _columns(config: GameConfig) -> list:
    N = config.n_experts
    if config.mode == "averaged":
        return (["t"] + [f"f_{i}" for i in range(1, N + 1)] + [f"p_{i}" for i in range(1, N + 1)]
                + ["a", "b"] + [f"r_{i}" for i in range(1, N + 1)] + ["blackwell", "telescoping"])
    return (["t"] + [f"p_{i}" for i in range(1, N + 1)] + ["I", "b"]
            + [f"r_{i}" for i in range(1, N + 1)] + ["sampled_loss", "blackwell", "telescoping"])


def format_round(rec) -> str:
    return ",".join(repr(v) if isinstance(v, float) else str(v) for v in _round_fields(rec))


def header_line(config: GameConfig) -> str:
    return json.dumps(
        {"format": TRANSCRIPT_FORMAT, "config": config.to_dict(),
         "potential": config.potential.to_dict(), "columns": _columns(config)},
        sort_keys=True, separators=(",", ":"))


def _actions_for(config: GameConfig) -> ActionSet:
    if config.loss.kind == "table":
        if len(config.loss.actions) != config.n_experts:
            raise DomainError("table loss must define one action per expert")
        return ActionSet(config.loss.actions, config.loss)
    return grid_actions(config.n_experts, config.loss)


def run_game(config: GameConfig, sink=None, keep_rounds: bool = True) -> GameTranscript:
    """Play one game and audit it.

    ``sink`` (a path or text stream) receives the transcript line by line
    as the game runs; with ``keep_rounds=False`` rounds are not held in
    memory. An invariant violation stops the game and is reported in the
    returned transcript rather than raised.
    """
    own_file = None
    if sink is not None and not hasattr(sink, "write"):
        own_file = open(sink, "w", encoding="utf-8", newline="\n")
        sink = own_file
    try:
        return _play(config, sink, keep_rounds)
    finally:
        if own_file is not None:
            own_file.close()


def _play(config: GameConfig, sink, keep_rounds: bool) -> GameTranscript:
    if sink is not None:
        sink.write(header_line(config) + "\n")
    expert_rng, adv_rng, draw_rng = _rngs(config.seed)
    n = config.horizon
    outcomes = config.loss.outcomes
    if config.adversary_policy == "oblivious_seeded":
        stream = [outcomes[k] for k in adv_rng.integers(0, len(outcomes), size=n)]
    P = config.potential
    rounds = []
    max_bw = max_tele = -math.inf
    aborted, diagnostic = None, ""

    if config.mode == "randomized":
        actions = _actions_for(config)
        state = RandomizedState.start(P, actions, n)
        step = lambda st, t: randomized_step(st, stream[t], draw_rng)
    else:
        advice = expert_policy(config, expert_rng)
        state = ForecasterState.start(P, config.loss, n, config.n_experts)

        def step(st, t):
            f = advice(t)
            if config.adversary_policy == "oblivious_seeded":
                b = stream[t]
            elif config.adversary_policy == "greedy":
                w, _ = predict(st, f)
                b = greedy_adversary(w, f, st.x, config.loss, P, n)
            else:
                b = lookahead_adversary(st, f, config.lookahead_depth)
            return observe(st, f, b)

    for t in range(n):
        try:
            state, rec = step(state, t)
        except InvariantViolation as exc:
            aborted, diagnostic = t, str(exc)
            if sink is not None:
                sink.write(f"#aborted,{t},{diagnostic}\n")
            break
        max_bw = max(max_bw, rec.blackwell)
        max_tele = max(max_tele, rec.telescoping)
        if keep_rounds:
            rounds.append(rec)
        if sink is not None:
            sink.write(format_round(rec) + "\n")

    regret = state.expected_regret() if config.mode == "randomized" else state.regret()
    bound = config.bound_value
    if aborted is None:
        terminal = P.value(state.x)
        if not state.x.max() <= terminal <= bound_constant(P, config.n_experts) + IDENTITY_TOL:
            aborted, diagnostic = n, f"terminal potential {terminal!r} above c + Phi(0)"
    return GameTranscript(
        config=config,
        rounds=tuple(rounds),
        regret=regret,
        bound_value=bound,
        bound_satisfied=aborted is None and regret <= bound + IDENTITY_TOL,
        max_blackwell=max_bw,
        max_telescoping=max_tele,
        aborted_round=aborted,
        diagnostic=diagnostic,
    )


def serialize_transcript(tr: GameTranscript) -> str:
    buf = io.StringIO()
    buf.write(header_line(tr.config) + "\n")
    for rec in tr.rounds:
        buf.write(format_round(rec) + "\n")
    if tr.aborted_round is not None and tr.aborted_round < tr.config.horizon:
        buf.write(f"#aborted,{tr.aborted_round},{tr.diagnostic}\n")
    return buf.getvalue()


def write_transcript(tr: GameTranscript, path) -> None:
    Path(path).write_text(serialize_transcript(tr), encoding="utf-8")


def _outcome_from(config: GameConfig, text: str):
    v = float(text)
    for o in config.loss.outcomes:
        if o == v:
            return o
    raise DomainError(f"outcome {text!r} not in {config.loss.outcomes}")


def parse_transcript(text: str) -> GameTranscript:
    """Inverse of :func:`serialize_transcript`; summary fields are recomputed."""
    lines = text.splitlines()
    if not lines:
        raise DomainError("empty transcript")
    head = json.loads(lines[0])
    if head.get("format") != TRANSCRIPT_FORMAT:
        raise DomainError(f"unsupported transcript format {head.get('format')!r}")
    config = GameConfig.from_dict(head["config"])
    N = config.n_experts
    rounds = []
    aborted, diagnostic = None, ""
    for line in lines[1:]:
        if line.startswith("#aborted,"):
            _, t, diagnostic = line.split(",", 2)
            aborted = int(t)
            break
        v = line.split(",")
        if config.mode == "averaged":
            rounds.append(RoundRecord(
                round=int(v[0]),
                advice=tuple(float(s) for s in v[1:1 + N]),
                weights=tuple(float(s) for s in v[1 + N:1 + 2 * N]),
                prediction=float(v[1 + 2 * N]),
                outcome=_outcome_from(config, v[2 + 2 * N]),
                increments=tuple(float(s) for s in v[3 + 2 * N:3 + 3 * N]),
                blackwell=float(v[3 + 3 * N]),
                telescoping=float(v[4 + 3 * N]),
            ))
        else:
            rounds.append(RandomizedRound(
                round=int(v[0]),
                distribution=tuple(float(s) for s in v[1:1 + N]),
                sampled_action_index=int(v[1 + N]),
                outcome=_outcome_from(config, v[2 + N]),
                expected_increment=tuple(float(s) for s in v[3 + N:3 + 2 * N]),
                sampled_loss=float(v[3 + 2 * N]),
                blackwell=float(v[4 + 2 * N]),
                telescoping=float(v[5 + 2 * N]),
            ))
    if config.mode == "averaged":
        regret = cumulative_regret(rounds, config.loss)
    else:
        regret = expected_regret(rounds, _actions_for(config))
    bound = config.bound_value
    return GameTranscript(
        config=config,
        rounds=tuple(rounds),
        regret=regret,
        bound_value=bound,
        bound_satisfied=aborted is None and regret <= bound + IDENTITY_TOL,
        max_blackwell=max((r.blackwell for r in rounds), default=-math.inf),
        max_telescoping=max((r.telescoping for r in rounds), default=-math.inf),
        aborted_round=aborted,
        diagnostic=diagnostic,
    )


def read_transcript(path) -> GameTranscript:
    return parse_transcript(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class SweepRow:
    param: float
    regret: float
    bound: float


SWEEP_PARAMS = ("eta", "experts", "horizon")


def _vary(config: GameConfig, param: str, value) -> GameConfig:
    if param == "eta":
        return replace(config, eta=float(value))
    if param == "experts":
        return replace(config, n_experts=int(value))
    if param == "horizon":
        return replace(config, horizon=int(value))
    raise DomainError(f"unknown sweep parameter {param!r}; expected one of {SWEEP_PARAMS}")


def _sweep_one(config: GameConfig) -> tuple[float, float]:
    tr = run_game(config, keep_rounds=False)
    if tr.aborted:
        raise InvariantViolation(tr.diagnostic, tr.aborted_round)
    return tr.regret, tr.bound_value


def sweep(config: GameConfig, param: str, values: Sequence, workers: int = 1) -> list[SweepRow]:
    """One game per value of ``param``; rows come back in input order."""
    configs = [_vary(config, param, v) for v in values]
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, configs))
    else:
        results = [_sweep_one(c) for c in configs]
    return [SweepRow(float(v), r, b) for v, (r, b) in zip(values, results)]
