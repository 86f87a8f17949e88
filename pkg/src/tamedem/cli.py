"""Command-line experiments.

Every command prints a JSON summary (with a ``manifest`` block holding the
resolved parameters) to stdout.  With ``--out`` the data CSV is written there
and the same summary goes to ``<out>.json`` next to it.

Exit codes: 0 success, 2 usage, 3 validation or experiment failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis.transform import build_transform, verify_transform
from .analysis.yw import YwParams, verify_yw
from .coupling import LevelFailed
from .problems import BUILTIN_NAMES, UnknownProblemError, get_problem
from .scheme import SchemeConfig, StepCapExceeded, empirical_moment, simulate_paths, validate_delta
from .stats import estimate_cost, estimate_rate

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _common(p: argparse.ArgumentParser, delta_flag: Optional[str] = "--delta") -> None:
    p.add_argument("--problem", required=True, help=f"one of {', '.join(BUILTIN_NAMES)}")
    if delta_flag:
        p.add_argument(delta_flag, type=float, required=True)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--log-base", choices=("natural", "10"), default="natural")
    p.add_argument("--max-steps", type=int, default=10**9)
    p.add_argument("--out", help="CSV output file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tamedem", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="independent paths; summary of Y_T and step counts")
    _common(p)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--record", help="write the first path's grid points as CSV (t,y)")

    p = sub.add_parser("rate", help="coupled-level convergence rate")
    _common(p, "--delta0")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--samples", type=int, default=200)

    p = sub.add_parser("cost", help="mean step count against delta")
    _common(p, None)
    p.add_argument("--deltas", type=_floats, required=True, help="e.g. 1e-3,5e-4,2.5e-4")
    p.add_argument("--samples", type=int, default=100)

    p = sub.add_parser("moments", help="E|Y_t|^order on a time grid")
    _common(p)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--paths", type=int, default=400)
    p.add_argument("--times", type=_floats, help="observation times (default: t-end)")

    p = sub.add_parser("check", help="property reports for the analysis objects")
    chk = p.add_subparsers(dest="what", required=True)
    q = chk.add_parser("yw")
    q.add_argument("--delta", type=float, required=True)
    q.add_argument("--eps", type=float, required=True)
    q.add_argument("--samples", type=int, default=1000)
    q.add_argument("--seed", type=_seed, default=0)
    q = chk.add_parser("transform")
    q.add_argument("--problem", required=True)
    q.add_argument("--grid", type=int, default=4096)
    return ap


def _manifest(args: argparse.Namespace, problem=None) -> dict:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "out", "record")}
    out = {
        "command": args.command,
        "params": params,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if problem is not None:
        out["problem"] = problem.describe()
    return out


def _problem(name: str):
    try:
        return get_problem(name)
    except UnknownProblemError as exc:
        raise UsageError(str(exc)) from None


def _warn(config: SchemeConfig, problem) -> list[str]:
    warnings = validate_delta(config, problem).warnings
    for w in warnings:
        print(f"warning: delta={config.delta:g}: {w}", file=sys.stderr)
    return warnings


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v))


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


def cmd_simulate(args):
    problem = _problem(args.problem)
    if args.paths < 1:
        raise UsageError("--paths must be positive")
    cfg = SchemeConfig(args.delta, args.t_end, args.log_base, args.max_steps, record_trajectory=bool(args.record))
    warnings = _warn(cfg, problem)
    paths = simulate_paths(problem, cfg, args.paths, args.seed)
    y = np.array([p.y_end for p in paths])
    n = np.array([p.n_steps for p in paths], dtype=np.float64)
    y_mean, y_se = _mean_se(y)
    summary = {
        "y_end_mean": y_mean,
        "y_end_stderr": y_se,
        "n_steps_mean": float(n.mean()),
        "delta": args.delta,
        "warnings": warnings,
    }
    files = {}
    if args.record:
        files[args.record] = _csv(["t", "y"], ([_fmt(t), _fmt(v)] for t, v in paths[0].trajectory))
    if args.out:
        files[args.out] = _csv(
            ["path", "y_end", "n_steps"], ([i, _fmt(p.y_end), p.n_steps] for i, p in enumerate(paths))
        )
    return problem, summary, files


def cmd_rate(args):
    problem = _problem(args.problem)
    if args.levels < 3:
        raise UsageError("--levels must be at least 3 for a regression with an interval")
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    warnings = []
    for k in range(1, args.levels + 2):
        warnings += _warn(SchemeConfig(args.delta0 * 2.0**-k, args.t_end, args.log_base), problem)
    exp = estimate_rate(
        problem, args.delta0, args.levels, args.samples, args.t_end, args.seed,
        log_base=args.log_base, max_steps=args.max_steps,
    )
    summary = {"fit": exp.fit.summary(), "rate": exp.rate, "warnings": warnings}
    return problem, summary, {args.out: exp.csv()} if args.out else {}


def cmd_cost(args):
    problem = _problem(args.problem)
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    warnings = []
    for d in args.deltas:
        warnings += _warn(SchemeConfig(d, args.t_end, args.log_base), problem)
    exp = estimate_cost(
        problem, args.deltas, args.samples, args.t_end, args.seed, log_base=args.log_base, max_steps=args.max_steps
    )
    summary = {"fit": exp.fit.summary(), "exponent": exp.exponent, "warnings": warnings}
    return problem, summary, {args.out: exp.csv()} if args.out else {}


def cmd_moments(args):
    problem = _problem(args.problem)
    times = args.times or [args.t_end]
    if min(times) < 0:
        raise UsageError("--times must be non-negative")
    cfg = SchemeConfig(args.delta, max(times), args.log_base, args.max_steps)
    warnings = _warn(cfg, problem)
    est = empirical_moment(problem, cfg, args.order, args.paths, times, args.seed)
    summary = {
        "order": args.order,
        "times": est.times.tolist(),
        "mean": est.mean.tolist(),
        "stderr": est.stderr.tolist(),
        "warnings": warnings,
    }
    rows = ([_fmt(t), _fmt(m), _fmt(s)] for t, m, s in zip(est.times, est.mean, est.stderr))
    return problem, summary, {args.out: _csv(["t", "moment", "stderr"], rows)} if args.out else {}


def cmd_check(args):
    if args.what == "yw":
        report = verify_yw(YwParams(args.delta, args.eps), args.samples, args.seed)
        return None, report, {}
    problem = _problem(args.problem)
    art = build_transform(problem, grid_resolution=args.grid)
    return problem, verify_transform(art, problem.xi), {}


COMMANDS = {"simulate": cmd_simulate, "rate": cmd_rate, "cost": cmd_cost, "moments": cmd_moments, "check": cmd_check}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        problem, summary, files = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LevelFailed, StepCapExceeded, ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    summary = {**summary, "manifest": _manifest(args, problem)}
    text = json.dumps(summary, indent=2, sort_keys=True, allow_nan=True) + "\n"
    try:
        for path, body in files.items():
            _write(path, body)
        if args.command != "check" and args.out:
            _write(args.out + ".json", text)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(text)
    if args.command == "check" and not summary.get("all_pass", False):
        return EXIT_FAILED
    return EXIT_OK


def console_main() -> None:
    sys.exit(main())


run_cli = main

if __name__ == "__main__":
    console_main()
