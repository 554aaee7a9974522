"""Command line entry point.

``run`` simulates one scenario, ``suite`` a whole scenario file, ``analyze``
rebuilds the suite report from CSV logs and ``gait`` prints the step-to-step
model for a set of gait parameters.  Output goes to ``--out-dir``, else to
``$SLIPWALK_OUT_DIR``, else to ``./slipwalk_out``.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import hlip
from .analysis import SuiteReport, analyze_dir, load_suite, run_suite, write_report
from .sim import run

OUT_ENV = "SLIPWALK_OUT_DIR"
DEFAULT_OUT = "slipwalk_out"


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _overrides(args) -> dict:
    return {"seed": args.seed, "dt_physics": args.dt_physics, "duration": args.duration}


def _print_report(report: SuiteReport) -> None:
    head = f"{'scenario':<16}{'status':<14}{'steps':>6}{'v_conv':>9}{'v_osc':>8}{'max|eta1|':>11}{'E_in':>7}"
    print(head)
    for r in report.results:
        own = report.membership_own.get(r.name, math.nan)
        print(
            f"{r.name:<16}{r.status:<14}{r.n_steps:>6}{r.v_converged:>9.3f}{r.v_oscillation:>8.3f}"
            f"{r.max_eta1:>11.4f}{own:>7.2f}"
        )
        if not r.ok:
            print(f"    {r.message}")
    if not math.isnan(report.wall_time):
        print(f"suite wall time {report.wall_time:.1f} s")


def cmd_run(args) -> int:
    scenarios = load_suite(args.config, **_overrides(args))
    if args.scenario:
        scenarios = [s for s in scenarios if s.name == args.scenario]
        if not scenarios:
            raise SystemExit(f"no scenario named {args.scenario!r} in {args.config}")
    elif len(scenarios) > 1:
        names = ", ".join(s.name for s in scenarios)
        raise SystemExit(f"{args.config} holds several scenarios ({names}); pick one with --scenario")
    sc = scenarios[0]
    tlog = run(sc.config)
    tlog.meta["class"] = sc.klass
    out = _out_dir(args) / sc.name
    tlog.write_csv(out)
    print(f"{sc.name}: {tlog.status} after {len(tlog.step_rows)} steps, logs in {out}")
    if tlog.message:
        print(f"    {tlog.message}")
    return tlog.exit_code


def cmd_suite(args) -> int:
    scenarios = load_suite(args.config, **_overrides(args))
    out = _out_dir(args)
    report = run_suite(scenarios, out, keep_logs=True, jobs=args.jobs)
    _print_report(report)
    print(f"report in {out}")
    return 0 if report.all_ok else 1


def cmd_analyze(args) -> int:
    report = analyze_dir(args.log_dir)
    out = Path(args.out_dir) if args.out_dir else Path(args.log_dir)
    write_report(report, out)
    _print_report(report)
    return 0 if report.all_ok else 1


def cmd_gait(args) -> int:
    model = hlip.s2s_matrices(args.T_S, args.T_D, args.z0, args.g)
    gait = hlip.make_gait(model, args.v_star, args.velocity)
    M = hlip.closed_loop_matrix(model, gait.K_db)
    with np.printoptions(precision=6, suppress=True):
        print(f"lambda     {model.lam:.6f} 1/s")
        print(f"A          {model.A.tolist()}")
        print(f"B          {model.B.tolist()}")
        print(f"K_deadbeat {gait.K_db.tolist()}")
        print(f"(A+BK)^2   {(M @ M).tolist()}")
        print(f"u*         {gait.u_star:.6f} m")
        print(f"x*         p={gait.x_star[0]:.6f} m, pd={gait.x_star[1]:.6f} m/s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slipwalk", description="aSLIP walking simulator and analysis tools")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def sim_flags(p):
        p.add_argument("--seed", type=int, default=None, help="terrain noise seed for every scenario")
        p.add_argument("--out-dir", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--dt-physics", type=float, default=None, help="physics step (s)")
        p.add_argument("--duration", type=float, default=None, help="simulated time per scenario (s)")

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("config", help="scenario file, or 'default' for the built-in suite")
    p.add_argument("--scenario", default=None, help="scenario name when the file holds several")
    sim_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="run every scenario in a file and check invariant sets")
    p.add_argument("config", help="suite file, or 'default'")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    sim_flags(p)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("analyze", help="rebuild the suite report from run logs")
    p.add_argument("log_dir")
    p.add_argument("--out-dir", default=None, help="where to write the report (default: log_dir)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gait", help="print step-to-step matrices, deadbeat gain and orbit")
    p.add_argument("--v-star", type=float, default=0.5)
    p.add_argument("--T-S", dest="T_S", type=float, default=0.4)
    p.add_argument("--T-D", dest="T_D", type=float, default=0.1)
    p.add_argument("--z0", type=float, default=1.0)
    p.add_argument("--g", type=float, default=9.81)
    p.add_argument("--velocity", choices=("pre_impact", "average"), default="pre_impact")
    p.set_defaults(func=cmd_gait)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"slipwalk: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
