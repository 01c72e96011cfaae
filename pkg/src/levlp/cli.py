"""Command line front end: solve, bench, selftest."""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .config import SolverConfig
from .driver import generate_instance, lp_solve
from .io import ParseError, read_instance
from .ipm import CentralityError, IterationBudgetError
from .linalg import COUNTER


def _solve_cmd(args) -> int:
    try:
        inst = read_instance(args.input)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"cannot read {args.input}: {exc}", file=sys.stderr)
        return 3
    cfg = SolverConfig(mode=args.mode, profile=args.profile, seed=args.seed,
                       collect_trace=args.trace is not None)
    try:
        report = lp_solve(inst.A, inst.b, inst.c, args.delta, cfg,
                          R=inst.R, L=inst.L)
    except (CentralityError, IterationBudgetError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    if args.trace:
        with open(args.trace, "w") as fh:
            for rec in report.trace:
                fh.write(f"iter={rec.iter} mu={rec.mu!r} phi={rec.phi!r} "
                         f"phi_b={rec.phi_b!r} dxnorm={rec.dxnorm!r} "
                         f"dsnorm={rec.dsnorm!r}\n")
    print(f"objective {report.objective!r}")
    print(f"primal_residual {report.primal_residual!r}")
    print(f"iterations {report.iterations}")
    print(f"mode {report.mode} seed {report.seed}")
    for i, v in enumerate(report.x):
        print(f"x[{i}] {v!r}")
    return 0


def _bench_cmd(args) -> int:
    sizes = []
    for spec in args.sizes.split(","):
        n_str, d_str = spec.split(":")
        sizes.append((int(n_str), int(d_str)))
    cfg = SolverConfig(mode=args.mode, seed=args.seed)
    rows = []
    for n, d in sizes:
        inst = generate_instance(n, d, seed=args.seed)
        COUNTER.reset()
        t0 = time.perf_counter()
        report = lp_solve(inst.A, inst.b, inst.c, args.delta, cfg)
        wall = time.perf_counter() - t0
        iters = report.iterations
        total = iters.get("phase1", 0) + iters.get("phase2", 0)
        rows.append((n, d, iters.get("phase1", 0), iters.get("phase2", 0),
                     total, total / max(d, 1) ** 0.5,
                     report.telemetry["gram_flops"], wall))
    print(f"{'n':>6} {'d':>4} {'ph1':>8} {'ph2':>8} {'iters':>8} "
          f"{'iters/sqrt(d)':>14} {'gram_flops':>12} {'wall_s':>8}")
    for r in rows:
        print(f"{r[0]:>6} {r[1]:>4} {r[2]:>8} {r[3]:>8} {r[4]:>8} "
              f"{r[5]:>14.1f} {r[6]:>12.3g} {r[7]:>8.2f}")
    return 0


def _selftest_cmd(args) -> int:
    from .selftest import run_all
    ok = run_all(fast=args.fast)
    return 0 if ok else 2


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="levlp")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve an LP instance file")
    sp.add_argument("--input", required=True)
    sp.add_argument("--delta", type=float, default=1e-3)
    sp.add_argument("--mode", choices=["exact", "sketched"], default="exact")
    sp.add_argument("--profile", choices=["theory", "practical"],
                    default="practical")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trace", default=None)
    sp.set_defaults(func=_solve_cmd)

    bp = sub.add_parser("bench", help="random tall LP suite with op counters")
    bp.add_argument("--sizes", default="64:4,256:16",
                    help="comma list of n:d pairs")
    bp.add_argument("--delta", type=float, default=1e-2)
    bp.add_argument("--mode", choices=["exact", "sketched"], default="exact")
    bp.add_argument("--seed", type=int, default=0)
    bp.set_defaults(func=_bench_cmd)

    tp = sub.add_parser("selftest", help="run the acceptance checks")
    tp.add_argument("--fast", action="store_true",
                    help="reduced instance counts (smoke test)")
    tp.set_defaults(func=_selftest_cmd)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
