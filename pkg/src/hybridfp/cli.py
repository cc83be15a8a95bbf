"""Command-line front end: ``run``, ``verify``, ``plot`` and ``sweep``.

Exit codes: 0 success (Converged, or all properties pass), 1 bad
configuration or unreadable input, 2 MaxIters, 3 inner solver failure or
infeasible ledger, 4 a failed property in ``verify``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config
from .hybrid import Status, check_trace_invariants, run
from .problems import verify_problem
from .traceio import trace_summary, write_plot, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_MAXITERS, EXIT_SOLVER, EXIT_PROPERTY = 0, 1, 2, 3, 4

STATUS_EXIT = {
    Status.CONVERGED: EXIT_OK,
    Status.MAX_ITERS: EXIT_MAXITERS,
    Status.INNER_SOLVE_FAILED: EXIT_SOLVER,
    Status.INFEASIBLE_LEDGER: EXIT_SOLVER,
}

VERIFY_RUN_ITERS = 20

log = logging.getLogger("hybridfp")


def _setup_logging():
    level = os.environ.get("HYBRIDFP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _err(msg):
    print(f"hybridfp: {msg}", file=sys.stderr)


def run_config(config_path, out_dir=".", seed=None) -> int:
    """Execute one configured run and write its files; returns the exit code."""
    try:
        cfg = load_config(config_path, seed)
    except ConfigError as exc:
        _err(f"{config_path}: {exc}")
        return EXIT_CONFIG
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace = run(cfg.instance, cfg.params, cfg.settings)
    csv_path, _ = write_trace(trace, out / cfg.outputs["trace"])
    summary = trace_summary(trace, cfg.instance)
    (out / cfg.outputs["summary"]).write_text(json.dumps(summary, indent=1) + "\n")
    if cfg.outputs.get("plot"):
        write_plot(csv_path, out / cfg.outputs["plot"])
    code = STATUS_EXIT[trace.status]
    if code == EXIT_SOLVER:
        _err(f"{config_path}: {trace.status.value}: {trace.message}")
    print(
        f"{config_path}: {trace.status.value} after {trace.iterations} iterations, "
        f"||x|| = {summary['final_norm']:.3e}"
    )
    return code


def cmd_run(args) -> int:
    return run_config(args.config, args.out, args.seed)


def cmd_verify(args) -> int:
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        _err(f"{args.config}: {exc}")
        return EXIT_CONFIG
    report = verify_problem(cfg.instance, args.samples, cfg.settings.rng_seed)
    lines = list(report.lines())
    ok = report.passed
    params = replace(cfg.params, max_iters=min(cfg.params.max_iters, VERIFY_RUN_ITERS))
    trace = run(cfg.instance, params, cfg.settings, verify_samples=0)
    if trace.status in (Status.INNER_SOLVE_FAILED, Status.INFEASIBLE_LEDGER):
        lines.append(f"FAIL short run: {trace.status.value}: {trace.message}")
        ok = False
    else:
        lines.append(f"PASS short run: {trace.status.value} after {trace.iterations} iterations")
    inv = check_trace_invariants(trace, cfg.instance)
    lines.extend(inv.lines())
    ok = ok and inv.passed
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_plot(args) -> int:
    out = args.out or str(Path(args.trace).with_suffix(".svg"))
    try:
        write_plot(args.trace, out)
    except (OSError, ValueError) as exc:
        _err(f"cannot plot {args.trace}: {exc}")
        return EXIT_CONFIG
    print(out)
    return EXIT_OK


def _sweep_one(job):
    path, out_dir, seed = job
    return path, run_config(path, out_dir, seed)


def cmd_sweep(args) -> int:
    out = Path(args.out)
    jobs = [(c, str(out / Path(c).stem), args.seed) for c in args.config]
    if len({j[1] for j in jobs}) != len(jobs):
        _err("sweep configs must have distinct file names")
        return EXIT_CONFIG
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    for path, code in results:
        print(f"{path}\texit {code}")
    return max(code for _, code in results)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridfp", description="Hybrid projection runs in l_p and Hilbert spaces.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the iteration for one config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="sampled property checks plus a short run")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="SVG convergence plot of a trace CSV")
    p.add_argument("trace")
    p.add_argument("--out", help="SVG path (default: next to the trace)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("sweep", help="run several configs, optionally in parallel")
    p.add_argument("--config", required=True, nargs="+")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="sweep", help="parent directory, one subdirectory per config")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
