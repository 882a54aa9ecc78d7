"""Command-line interface: plan a single instance or run benchmark suites."""

from __future__ import annotations

import argparse
import math
import sys

from . import bench
from .tree import SearchConfig


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-batch", type=int, default=50,
                   help="skeletons added per session (default 50)")
    p.add_argument("--session-time", type=float, default=250.0,
                   help="per-session search budget in seconds (default 250)")
    p.add_argument("--total-time", type=float, default=300.0,
                   help="overall budget in seconds (default 300)")
    p.add_argument("--alpha", type=float, default=0.26,
                   help="progressive-widening exponent (default 0.26)")
    p.add_argument("--ucb-c", type=float, default=math.sqrt(2),
                   help="UCB exploration constant (default sqrt(2))")
    p.add_argument("--seed", type=int, default=0, help="search RNG seed")
    p.add_argument("--anytime", action="store_true",
                   help="keep optimizing reward until the total budget "
                        "instead of stopping at the first feasible plan")
    p.add_argument("--virtual-time", action="store_true",
                   help="measure time in rollouts instead of seconds "
                        "(deterministic budgets)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tamp2d",
        description="Task-and-motion planning over 2D geometric domains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="plan a single domain/problem instance")
    plan.add_argument("--domain", required=True, help="domain file (.dom)")
    plan.add_argument("--problem", required=True, help="problem file (.prob)")
    plan.add_argument("--instance-seed", type=int, default=None,
                      help="seed for instance-level geometry (defaults to --seed)")
    plan.add_argument("--telemetry", metavar="PATH", default=None,
                      help="write per-rollout line-JSON telemetry to PATH")
    plan.add_argument("--out", default=None,
                      help="trace output path (default: problem path with "
                           ".trace.json suffix)")
    _add_search_flags(plan)

    bm = sub.add_parser("bench", help="run randomized benchmark suites")
    bm.add_argument("--tasks", default=",".join(bench.TASKS),
                    help="comma-separated task names (default: all)")
    bm.add_argument("-n", "--instances", type=int, default=30,
                    help="instances per task (default 30)")
    bm.add_argument("--timeout", type=float, default=None,
                    help="per-instance timeout override in seconds "
                         "(default: per-task values)")
    bm.add_argument("--workers", type=int, default=1,
                    help="parallel worker processes (default 1)")
    bm.add_argument("--seed", type=int, default=0, help="master seed")
    bm.add_argument("--virtual-time", action="store_true",
                    help="rollout-count budgets; CSV byte-reproducible")
    bm.add_argument("--out", default=None, help="CSV output path (default stdout)")
    return parser


def _config(args: argparse.Namespace) -> SearchConfig:
    return SearchConfig(
        alpha=args.alpha,
        ucb_c=args.ucb_c,
        session_time=min(args.session_time, args.total_time),
        total_budget=args.total_time,
        batch_size=args.k_batch,
        rng_seed=args.seed,
        anytime=args.anytime,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plan":
        return bench.run_once(
            args.domain, args.problem, _config(args),
            out_path=args.out, telemetry_path=args.telemetry,
            virtual_time=args.virtual_time, instance_seed=args.instance_seed,
        )
    tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
    try:
        text = bench.run_bench(tasks, args.instances, master_seed=args.seed,
                               workers=args.workers, timeout=args.timeout,
                               virtual_time=args.virtual_time)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
