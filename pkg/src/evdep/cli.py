"""Command-line front end.

    evdep simulate   --alpha A --m M --n N --seed S [--out FILE]
    evdep estimate   --input SAMPLE.csv --y 1,1,1 [--constrained] [--out FILE]
    evdep check      --input SET.json [--tol T]
    evdep experiment --config FILE --out DIR [--seed S] [--threads K]

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .constrain import SolverError, pickands_variables, solve_constrained
from .estimate import estimate_all, ht_weights, simplex_point
from .experiment import (
    PAIR_POOLING_NOTE,
    QUADRATURE,
    QUADRATURE_NOTE,
    ExperimentConfig,
    config_echo,
    run_experiment,
)
from .lattice import (
    DEFAULT_TOL,
    ExponentSet,
    check_consistency,
    extremal_coefficients_from_V,
    theta_bounds_m3,
)
from .models import BlockMaximaSample, LogisticModel, RngStream, sample_logistic

log = logging.getLogger("evdep")


class UsageError(Exception):
    pass


def fmt(v) -> str:
    return "" if v is None else f"{float(v):.17g}"


def _alpha(text: str) -> float:
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < a <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1], got {a}")
    return a


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _point(text: str) -> np.ndarray:
    try:
        y = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not np.all(y > 0):
        raise argparse.ArgumentTypeError("coordinates of y must be positive")
    return y


def _write_text(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _labelled(values: dict) -> dict:
    return {S.label: v for S, v in values.items()}


# --- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.alpha < 1e-3:
        raise UsageError("alpha below 1e-3 is outside the sampler's range")
    sample = sample_logistic(LogisticModel(args.alpha, args.m), args.n, RngStream(args.seed, args.stream))
    _write_text(sample.to_csv(), args.out)
    return 0


def _set_report(V: ExponentSet, tol: float) -> dict:
    rep = check_consistency(V, tol)
    return {
        "V": _labelled(V.as_dict()),
        "d": _labelled(rep.decomposition.as_dict()),
        "consistent": rep.consistent,
        "violations": [{"L": L.label, "d": d} for L, d in rep.violations],
    }


def cmd_estimate(args) -> int:
    sample = BlockMaximaSample.from_csv(Path(args.input).read_text())
    y = args.y
    if len(y) != sample.m:
        raise UsageError(f"y has {len(y)} coordinates but the sample has m={sample.m}")
    if sample.n < 2:
        raise UsageError("the estimator needs at least two rows")
    unconstrained = estimate_all(sample, y)
    out = {"m": sample.m, "n": sample.n, "y": list(map(float, y))}
    if args.constrained:
        weights = {B: ht_weights(sample, B, simplex_point(y[list(B.indices)]))
                   for B in pickands_variables(sample.m)}
        est = solve_constrained(weights, y)
        out.update(_set_report(est.exponent, args.tol))
        out["changed"] = est.changed
        out["active_set"] = [L.label for L in est.active_set]
        out["kkt_residual"] = est.kkt_residual
        out["unconstrained"] = _set_report(unconstrained, args.tol)
    else:
        out.update(_set_report(unconstrained, args.tol))
        out["changed"] = False
    _write_text(json.dumps(out, indent=2) + "\n", args.out)
    return 0


def load_exponent_set(doc: dict) -> ExponentSet:
    if "y" not in doc or "V" not in doc:
        raise UsageError("input JSON needs keys 'y' and 'V'")
    y = np.asarray(doc["y"], dtype=float)
    return ExponentSet(y, dict(doc["V"]))


def cmd_check(args) -> int:
    doc = json.loads(Path(args.input).read_text())
    V = load_exponent_set(doc)
    out = {"m": V.m, "y": list(map(float, V.y))}
    out.update(_set_report(V, args.tol))
    if np.all(V.y == 1.0):
        theta = extremal_coefficients_from_V(V) if V.within_margin_bounds() else None
        if theta is not None:
            out["theta"] = _labelled(theta.as_dict())
        if V.m == 3:
            pairs = [V[(1, 2)], V[(1, 3)], V[(2, 3)]]
            if all(1.0 <= t <= 2.0 for t in pairs):
                lo, hi = theta_bounds_m3(*pairs)
                out["theta_123_bounds"] = [lo, hi]
                out["theta_123_within_bounds"] = bool(lo - args.tol <= V[(1, 2, 3)] <= hi + args.tol)
    print(json.dumps(out, indent=2))
    return 0


CONFIG_KEYS = {
    "alphas": lambda s: tuple(_alpha(t) for t in s.split(",")),
    "n": int,
    "replications": int,
    "p_first": float,
    "p_step": float,
    "n_points": int,
    "seed": _seed,
    "m": int,
}


def read_config(path: str | None) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    if path is None:
        return {}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}")
    return out


def version_string() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_experiment(result, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["alpha,B,y1,y2,y3,rmse_u,rmse_c,ratio"]
    for a, B, y, ru, rc in result.rmse_rows():
        ratio = rc / ru if ru > 0 else None
        lines.append(",".join([fmt(a), B.label, *map(fmt, y), fmt(ru), fmt(rc), fmt(ratio)]))
    (out_dir / "rmse.csv").write_text("\n".join(lines) + "\n")

    lines = ["alpha,B,t_u,t_c"]
    lines += [",".join([fmt(a), B.label, fmt(tu), fmt(tc)]) for a, B, tu, tc in result.tdev_rows()]
    (out_dir / "tdev.csv").write_text("\n".join(lines) + "\n")

    lines = ["alpha,pct_changed_rep,pct_changed_point"]
    lines += [",".join(map(fmt, row)) for row in result.changed_rows()]
    (out_dir / "changed.csv").write_text("\n".join(lines) + "\n")

    meta = {
        "version": version_string(),
        "config": config_echo(result.config),
        "seed": result.config.seed,
        "quadrature": {"convention": QUADRATURE, "description": QUADRATURE_NOTE},
        "pair_constrained_errors": PAIR_POOLING_NOTE,
        "percent_changed": {
            "pct_changed_rep": "replications in which at least one grid point changed",
            "pct_changed_point": "(replication, trivariate grid point) pairs that changed",
        },
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def cmd_experiment(args) -> int:
    values = read_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    if "seed" not in values:
        raise UsageError("a seed is required (config key 'seed' or --seed)")
    if args.replications is not None:
        values["replications"] = args.replications
    try:
        config = ExperimentConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc))
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    total = len(config.alphas) * config.replications
    done = [0]

    def progress(task):
        done[0] += 1
        if done[0] % 100 == 0 or done[0] == total:
            log.info("replications %d/%d", done[0], total)

    result = run_experiment(config, threads=threads, progress=progress)
    write_experiment(result, Path(args.out))
    return 0


# --- wiring --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evdep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a logistic max-stable sample")
    s.add_argument("--alpha", type=_alpha, required=True)
    s.add_argument("--m", type=_positive_int, default=3)
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--seed", type=_seed, required=True)
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate every exponent measure at one point")
    e.add_argument("--input", required=True)
    e.add_argument("--y", type=_point, required=True)
    e.add_argument("--constrained", action="store_true")
    e.add_argument("--tol", type=float, default=1e-7)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("check", help="check a complete exponent-measure set for consistency")
    c.add_argument("--input", required=True)
    c.add_argument("--tol", type=float, default=DEFAULT_TOL)
    c.set_defaults(func=cmd_check)

    x = sub.add_parser("experiment", help="run the Monte Carlo comparison")
    x.add_argument("--config")
    x.add_argument("--out", required=True)
    x.add_argument("--seed", type=_seed)
    x.add_argument("--replications", type=_positive_int)
    x.add_argument("--threads", type=_positive_int)
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"evdep: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, SolverError, RuntimeError) as exc:
        print(f"evdep: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
