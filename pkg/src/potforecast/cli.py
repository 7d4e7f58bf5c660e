"""Command-line driver.

Exit codes: 0 success, 1 verification failed, 2 invalid input,
3 runtime invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .core import LossFunction
from .errors import BudgetExceeded, DomainError, InvariantViolation, VertexScanRefused
from .game import ADVERSARY_POLICIES, EXPERT_POLICIES, MODES, SWEEP_PARAMS, GameConfig, run_game, sweep
from .minimax import DiscreteGameSpec, MinimaxSolver, bound_audit
from .potentials import (
    ExponentialPotential,
    certify_supersolution,
    default_eta,
    exponential_composite,
)

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_INVARIANT = 0, 1, 2, 3

# spec-file key -> (GameConfig field, default)
SPEC_KEYS = {
    "horizon": ("horizon", 1000),
    "experts": ("n_experts", 2),
    "loss": ("loss", "absolute"),
    "eta": ("eta", None),
    "c": ("c", None),
    "expert_policy": ("expert_policy", "seeded_random"),
    "adversary": ("adversary_policy", "greedy"),
    "depth": ("lookahead_depth", 2),
    "seed": ("seed", 0),
    "mode": ("mode", "averaged"),
    "advice_table": ("advice_table", ()),
    "transcript": (None, "transcript.txt"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def _add_game_flags(p: argparse.ArgumentParser, spec_file: bool = True):
    if spec_file:
        p.add_argument("--spec", type=Path, help="JSON run spec; flags override its fields")
    p.add_argument("--n", "--horizon", dest="horizon", type=int)
    p.add_argument("--experts", type=int)
    p.add_argument("--loss", choices=("absolute", "squared"))
    p.add_argument("--eta", type=float, help="learning rate (default sqrt(2 ln N))")
    p.add_argument("--c", type=float, help="Hessian constant (default eta/2)")
    p.add_argument("--expert-policy", dest="expert_policy", choices=EXPERT_POLICIES)
    p.add_argument("--adversary", choices=ADVERSARY_POLICIES)
    p.add_argument("--depth", type=int, help="lookahead depth for minimax_lookahead")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=MODES)


def load_run_spec(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read spec file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("spec file must hold a JSON object")
    unknown = sorted(set(data) - set(SPEC_KEYS))
    if unknown:
        raise UsageError(f"unknown spec keys: {', '.join(unknown)}")
    return data


def resolve_settings(args, spec: dict) -> dict:
    """Defaults, then spec-file values, then command-line flags."""
    out = {k: default for k, (_, default) in SPEC_KEYS.items()}
    out.update(spec)
    for key in SPEC_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def config_from_settings(s: dict) -> GameConfig:
    loss = s["loss"]
    if isinstance(loss, str):
        if loss not in ("absolute", "squared"):
            raise UsageError(f"unknown loss {loss!r}")
        loss = LossFunction(loss)
    elif isinstance(loss, dict):
        loss = LossFunction.from_dict(loss)
    kwargs = {field: s[key] for key, (field, _) in SPEC_KEYS.items() if field and key != "loss"}
    kwargs["advice_table"] = tuple(tuple(r) for r in kwargs["advice_table"])
    for k in ("horizon", "n_experts", "lookahead_depth", "seed"):
        if not isinstance(kwargs[k], int) or isinstance(kwargs[k], bool):
            raise UsageError(f"{k} must be an integer")
    return GameConfig(loss=loss, **kwargs)


def cmd_simulate(args) -> int:
    settings = resolve_settings(args, load_run_spec(args.spec))
    config = config_from_settings(settings)
    tr = run_game(config, sink=settings["transcript"], keep_rounds=False)
    print(f"regret={tr.regret!r} bound={tr.bound_value!r} satisfied={str(tr.bound_satisfied).lower()}")
    if tr.aborted:
        print(f"invariant violation at round {tr.aborted_round}: {tr.diagnostic}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK if tr.bound_satisfied else EXIT_FAILED


def cmd_verify_potential(args) -> int:
    N = args.experts
    if N < 1:
        raise UsageError("--experts must be at least 1")
    eta = args.eta if args.eta is not None else default_eta(N)
    if args.kind == "exponential":
        P = ExponentialPotential(eta=eta, c=args.c)
    else:
        P = exponential_composite(eta, c=args.c)
    rng = np.random.Generator(np.random.Philox(args.seed))
    pts = list(rng.standard_normal((args.samples, N)))
    if not pts:
        raise UsageError("--samples must be positive")
    report = certify_supersolution(P, pts, grid_per_axis=args.grid, sampled_h=args.sampled_h, seed=args.seed)
    print(f"kind={args.kind} eta={eta!r} c={P.c!r} experts={N} {report.summary()}")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_minimax(args) -> int:
    spec = DiscreteGameSpec(
        horizon=args.n,
        n_experts=args.experts,
        advice_grid=tuple(_floats(args.advice_grid)),
        simplex_steps=args.simplex_steps,
        outcomes=tuple(_floats(args.outcomes)),
        loss_kind=args.loss,
    )
    eta = args.eta if args.eta is not None else default_eta(args.experts)
    P = ExponentialPotential(eta=eta, c=args.c)
    audit = bound_audit(spec, P)
    print(audit.summary())
    if args.table is not None:
        rows = MinimaxSolver(spec).value_rows()
        with open(args.table, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x_{i}" for i in range(1, args.experts + 1)] + ["value"])
            for row in rows:
                w.writerow([row[0]] + [repr(v) for v in row[1:]])
    return EXIT_OK if audit.holds else EXIT_FAILED


def cmd_sweep(args) -> int:
    values = _floats(args.values)
    if not values:
        raise UsageError("--values must list at least one value")
    spec = load_run_spec(args.spec)
    settings = resolve_settings(args, spec)
    if args.horizon is None and "horizon" not in spec:
        settings["horizon"] = 100
    config = config_from_settings(settings)
    if args.param in ("experts", "horizon") and any(v != int(v) or v < 1 for v in values):
        raise UsageError(f"{args.param} values must be positive integers")
    rows = sweep(config, args.param, values, workers=args.workers)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["param", "regret", "bound"])
    for r in rows:
        w.writerow([repr(r.param), repr(r.regret), repr(r.bound)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="potforecast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="play one game and audit the regret bound")
    _add_game_flags(p)
    p.add_argument("--transcript", type=Path, help="transcript output path (default transcript.txt)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-potential", help="numerically certify a potential")
    p.add_argument("--kind", choices=("exponential", "composite"), default="exponential")
    p.add_argument("--eta", type=float)
    p.add_argument("--experts", type=int, default=2)
    p.add_argument("--c", type=float, help="claimed Hessian constant (default eta/2)")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--grid", type=int, default=0, help="grid points per axis on [-3, 3]")
    p.add_argument("--sampled-h", dest="sampled_h", type=int,
                   help="draw this many random sign vectors instead of all 2^N")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_potential)

    p = sub.add_parser("minimax", help="audit the bound against the exact minimax value")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--experts", type=int, default=2)
    p.add_argument("--advice-grid", dest="advice_grid", default="0,0.5,1")
    p.add_argument("--simplex-steps", dest="simplex_steps", type=int, default=20)
    p.add_argument("--outcomes", default="0,1")
    p.add_argument("--loss", choices=("absolute", "squared"), default="absolute")
    p.add_argument("--eta", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--table", type=Path, help="write reachable value table as CSV")
    p.set_defaults(func=cmd_minimax)

    p = sub.add_parser("sweep", help="one game per parameter value; CSV to stdout")
    _add_game_flags(p)
    p.add_argument("--param", choices=SWEEP_PARAMS, default="eta")
    p.add_argument("--values", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, DomainError, VertexScanRefused, BudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvariantViolation as exc:
        print(f"invariant violation at round {exc.round_index}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
