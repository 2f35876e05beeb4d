"""``bench``: generate instances, run the solvers, write convergence logs.

    bench generate --buildings 3 --horizon 8 --zones 2 --seed 42 -o inst.json
    bench solve --method al inst.json -o al.csv
    bench compare --methods al,l1,admm,oracle inst.json -o out/

Exit status is 0 on success, 1 when a solver fails (or misses a requested
tolerance) and 2 on bad input.  ``BENCH_LOG=debug|info`` sets log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .admm import run_admm
from .errors import PrimalDecError, ProblemFileError, InvalidProblemError
from .hvac import build_instance, make_scenario
from .model import assemble_monolithic, load, save
from .oracle import solve_monolithic
from .outer import (IterationRecord, RunConfig, SolveReport, relative_gap, report_internal_timing,
                    run_al, run_l1, termination_check)

__all__ = ["main", "CSV_COLUMNS"]

CSV_COLUMNS = ["iter", "cost", "eq_infeas", "ineq_infeas", "rel_gap", "alpha", "step_norm",
               "comm_floats", "wall_ms"]
METHODS = ("al", "l1", "admm", "oracle")

log = logging.getLogger("bench")


class ConfigError(Exception):
    pass


def _parser():
    p = argparse.ArgumentParser(prog="bench", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic grid-coupled building instance")
    g.add_argument("--buildings", type=int, default=3)
    g.add_argument("--horizon", type=int, default=8)
    g.add_argument("--zones", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--grid-cap", type=float, default=None,
                   help="grid capacity per step (default: 90%% of the uncoupled peak)")
    g.add_argument("--config", type=Path, default=None,
                   help="JSON or TOML file with any of the fields above")
    g.add_argument("-o", "--output", type=Path, required=True)

    s = sub.add_parser("solve", help="run one method on an instance")
    s.add_argument("instance", type=Path)
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--rho", type=float, default=None,
                   help="ADMM penalty (default 100) or initial AL penalty (default 1e3)")
    s.add_argument("--iters", type=int, default=None,
                   help="ADMM iterations (default 100) or outer iteration cap (default 60)")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--tol-gap", type=float, default=None,
                   help="required relative gap to the centralized solution")
    s.add_argument("--tol-infeas", type=float, default=None,
                   help="required max constraint violation")
    s.add_argument("-o", "--output", type=Path, default=None, help="CSV log (default: stdout)")

    c = sub.add_parser("compare", help="run several methods and the centralized reference")
    c.add_argument("instance", type=Path)
    c.add_argument("--methods", default="al,l1,admm,oracle")
    c.add_argument("--rho", type=float, default=None)
    c.add_argument("--iters", type=int, default=None)
    c.add_argument("--threads", type=int, default=None)
    c.add_argument("-o", "--output", type=Path, required=True, help="output directory")
    return p


def _read_config(path):
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError as exc:
            raise ConfigError("TOML configs need Python 3.11+; use JSON") from exc
        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError("config must be a table/object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _generate(args):
    opts = {"buildings": args.buildings, "horizon": args.horizon, "zones": args.zones,
            "seed": args.seed, "grid_cap": args.grid_cap}
    if args.config is not None:
        extra = _read_config(args.config)
        unknown = set(extra) - set(opts)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        opts.update(extra)
    if opts["buildings"] < 1 or opts["horizon"] < 1 or opts["zones"] < 1:
        raise ConfigError("buildings, horizon and zones must be positive")
    cfg = make_scenario(opts["buildings"], opts["horizon"], opts["zones"], opts["seed"],
                        grid_cap=opts["grid_cap"])
    problem = build_instance(cfg)
    save(args.output, problem)
    log.info("wrote %s (S=%d, n_y=%d, grid cap %.4g)", args.output, problem.S, problem.n_y, cfg.v_bar)
    return 0


def _oracle_report(problem, t0):
    sol = solve_monolithic(assemble_monolithic(problem), cross_check=False)
    m = termination_check(problem, sol.y, sol.x_list)
    rec = IterationRecord(1, m.cost, m.eq_infeas, m.ineq_infeas, 0.0, 1.0, 0.0, 0,
                          1e3 * (time.perf_counter() - t0))
    return SolveReport("oracle", sol.y, sol.x_list, [rec], "converged"), sol.objective


def _run_method(method, problem, args, reference):
    t0 = time.perf_counter()
    if method == "oracle":
        return _oracle_report(problem, t0)[0]
    if method == "admm":
        return run_admm(problem, rho=args.rho or 100.0, max_iter=args.iters or 100,
                        threads=args.threads, oracle_objective=reference)
    cfg = RunConfig(rho0=args.rho or 1e3, max_outer=args.iters or 60, threads=args.threads,
                    oracle_objective=reference)
    return (run_al if method == "al" else run_l1)(problem, cfg)


def _csv_text(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in report.iterations:
        w.writerow(rec.row())
    return buf.getvalue()


def _summary(report, args, instance, reference):
    final = report.final
    out = {
        "method": report.method,
        "instance": str(instance),
        "status": report.status,
        "error": report.error,
        "iterations": len(report.iterations),
        "final": None if final is None else dict(zip(CSV_COLUMNS, final.row())),
        "oracle_objective": reference,
        "timing_percent": report_internal_timing(report),
        "flags": {k: v for k, v in report.flags.items() if k in ("penalty-too-small", "coupling_gap")},
        "config": {k: v for k, v in vars(args).items() if k not in ("func",)},
    }
    out["config"] = {k: (str(v) if isinstance(v, Path) else v) for k, v in out["config"].items()}
    return out


def _load(path):
    try:
        return load(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"no such instance file: {path}") from exc


def _solve(args):
    problem = _load(args.instance)
    reference = None
    if args.tol_gap is not None and args.method != "oracle":
        reference = solve_monolithic(assemble_monolithic(problem), cross_check=False).objective
    report = _run_method(args.method, problem, args, reference)
    if args.method == "oracle":
        reference = report.final.cost
    text = _csv_text(report)
    summary = _summary(report, args, args.instance, reference)
    ok = report.status != "failed"
    final = report.final
    if ok and final is not None:
        if args.tol_gap is not None:
            summary["meets_gap"] = bool(final.rel_gap is not None and final.rel_gap <= args.tol_gap)
            ok &= summary["meets_gap"]
        if args.tol_infeas is not None:
            summary["meets_infeas"] = bool(max(final.eq_infeas, final.ineq_infeas) <= args.tol_infeas)
            ok &= summary["meets_infeas"]
    if args.output is None:
        sys.stdout.write(text)
        print(json.dumps(summary, default=_jsonable), file=sys.stderr)
    else:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(text)
        args.output.with_suffix(".summary.json").write_text(
            json.dumps(summary, indent=2, default=_jsonable))
    if report.status == "failed":
        print(f"bench: {report.method} failed: {report.error}", file=sys.stderr)
    return 0 if ok else 1


def _compare(args):
    problem = _load(args.instance)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    out = args.output
    out.mkdir(parents=True, exist_ok=True)
    oracle, reference = _oracle_report(problem, time.perf_counter())
    summaries, failed = {}, False
    for m in methods:
        report = oracle if m == "oracle" else _run_method(m, problem, args, reference)
        (out / f"{m}.csv").write_text(_csv_text(report))
        s = _summary(report, args, args.instance, reference)
        if report.final is not None:
            s["rel_gap"] = relative_gap(report.final.cost, reference)
        summaries[m] = s
        failed |= report.status == "failed"
        log.info("%s: status %s, %d iterations", m, report.status, len(report.iterations))
    (out / "summary.json").write_text(json.dumps(
        {"instance": str(args.instance), "oracle_objective": reference, "methods": summaries},
        indent=2, default=_jsonable))
    return 1 if failed else 0


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return str(o)


def main(argv=None):
    level = os.environ.get("BENCH_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = _parser().parse_args(argv)
    handler = {"generate": _generate, "solve": _solve, "compare": _compare}[args.command]
    try:
        return handler(args)
    except (ConfigError, ProblemFileError, InvalidProblemError, ValueError) as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return 2
    except PrimalDecError as exc:
        print(f"bench: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
