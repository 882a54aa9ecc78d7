"""Single-run plumbing and the benchmark harness: randomized instances,
per-run records, and an aggregate CSV mirroring the evaluation layout.

Wall-clock mode honours real timeouts; virtual-time mode measures time in
rollouts, which makes whole suites byte-reproducible from the master seed
(see docs/metrics.md).
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import math
import random
import statistics
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

from .model import Problem
from .parser import ParseError, emit_plan_trace, parse_domain, parse_problem
from .tree import SearchConfig, VirtualClock, WallClock, etamp_with_tree

CSV_COLUMNS = [
    "task", "instanceSeed", "rngSeed", "success", "timeToFirstPlan",
    "rollouts", "skeletonsGenerated", "chosenSkeletonRank", "motionCost",
]


@dataclass
class RunRecord:
    task_name: str
    instance_seed: int
    rng_seed: int
    success: bool
    time_to_first_plan: float  # the timeout value when success is False
    rollouts: int
    skeletons_generated: int
    chosen_skeleton_rank: int | None
    motion_cost: float | None

    def row(self) -> list[str]:
        return [
            self.task_name,
            str(self.instance_seed),
            str(self.rng_seed),
            "1" if self.success else "0",
            repr(round(self.time_to_first_plan, 6)),
            str(self.rollouts),
            str(self.skeletons_generated),
            "" if self.chosen_skeleton_rank is None else str(self.chosen_skeleton_rank),
            "" if self.motion_cost is None else repr(round(self.motion_cost, 6)),
        ]


# --- task registry ------------------------------------------------------------

def _replace_bodies(problem: Problem, poses: dict[str, tuple[float, float, float]]) -> Problem:
    geometry = []
    for entry in problem.geometry:
        if entry[0] == "body" and entry[1] in poses:
            x, y, th = poses[entry[1]]
            entry = entry[:5] + (x, y, th)
        geometry.append(entry)
    return dataclasses.replace(problem, geometry=tuple(geometry))


def _randomize_unpack2(problem: Problem, rng: random.Random) -> Problem:
    x1 = rng.uniform(-0.05, 0.05)
    return _replace_bodies(problem, {
        "body1": (x1, rng.uniform(0.62, 0.75), 0.0),
        # the tall body stays on the short body's approach corridor
        "body2": (x1 + rng.uniform(-0.03, 0.03), rng.uniform(0.3, 0.45), 0.0),
    })


def _randomize_unpack3(problem: Problem, rng: random.Random) -> Problem:
    x1 = rng.uniform(-0.05, 0.05)
    return _replace_bodies(problem, {
        "body1": (x1, rng.uniform(0.65, 0.75), 0.0),
        "body2": (x1 + rng.uniform(-0.03, 0.03), rng.uniform(0.42, 0.5), 0.0),
        "body3": (x1 + rng.uniform(-0.03, 0.03), rng.uniform(0.15, 0.28), 0.0),
    })


def _randomize_kitchen(problem: Problem, rng: random.Random) -> Problem:
    bodies = sorted(e[1] for e in problem.geometry if e[0] == "body")
    n = len(bodies)
    slots = [(-0.35 + 0.7 * i / max(n - 1, 1)) for i in range(n)]
    poses = {
        b: (slot + rng.uniform(-0.04, 0.04), 0.15 + rng.uniform(-0.03, 0.03), 0.0)
        for b, slot in zip(bodies, slots)
    }
    return _replace_bodies(problem, poses)


def _randomize_hanoi(problem: Problem, rng: random.Random) -> Problem:
    # the feasible grasp bands are derived from the instance seed, so the
    # symbolic problem itself is unchanged
    return problem


@dataclass
class TaskSpec:
    name: str
    domain_file: str
    problem_file: str
    timeout: float
    randomize: Callable[[Problem, random.Random], Problem]
    alpha: float = 0.26


TASKS: dict[str, TaskSpec] = {
    t.name: t for t in [
        TaskSpec("unpack2", "unpacking.dom", "unpack2.prob", 60.0, _randomize_unpack2),
        TaskSpec("unpack3", "unpacking.dom", "unpack3.prob", 120.0, _randomize_unpack3),
        TaskSpec("kitchen2", "kitchen.dom", "kitchen2.prob", 120.0, _randomize_kitchen),
        TaskSpec("kitchen3", "kitchen.dom", "kitchen3.prob", 120.0, _randomize_kitchen),
        TaskSpec("kitchen4", "kitchen.dom", "kitchen4.prob", 120.0, _randomize_kitchen),
        TaskSpec("hanoi3", "hanoi.dom", "hanoi3.prob", 300.0, _randomize_hanoi, alpha=0.5),
    ]
}


def load_bundled(domain_file: str, problem_file: str) -> Problem:
    base = resources.files("tamp2d") / "domains"
    domain = parse_domain((base / domain_file).read_text())
    return parse_problem((base / problem_file).read_text(), domain)


# --- single runs ----------------------------------------------------------------

def run_once(domain_path: str, problem_path: str, cfg: SearchConfig,
             out_path: str | None = None, telemetry_path: str | None = None,
             virtual_time: bool = False, instance_seed: int | None = None,
             stdout=None, stderr=None) -> int:
    """CLI workhorse: plan one instance; exit code 0 success, 2 timeout,
    1 error.  Writes the bound trace JSON next to the problem on success."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        domain = parse_domain(Path(domain_path).read_text())
        problem = parse_problem(Path(problem_path).read_text(), domain)
    except OSError as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    except ParseError as exc:
        for d in exc.diagnostics:
            print(d, file=stderr)
        return 1

    telemetry = open(telemetry_path, "w") if telemetry_path else None
    clock = VirtualClock() if virtual_time else WallClock()
    try:
        trace, tree = etamp_with_tree(problem, cfg, telemetry=telemetry,
                                      clock=clock, instance_seed=instance_seed)
    finally:
        if telemetry:
            telemetry.close()
    if trace is None:
        print(f"timeout: no plan within {cfg.total_budget:g} "
              f"({tree.rollouts} rollouts, {len(tree.children)} skeletons)",
              file=stdout)
        return 2
    out = Path(out_path) if out_path else Path(problem_path).with_suffix(".trace.json")
    out.write_text(emit_plan_trace(trace) + "\n")
    print(f"plan found: {len(trace.steps)} steps, reward {trace.reward:.6f}, "
          f"motion cost {trace.motion_cost:.6f}, skeleton rank "
          f"{trace.skeleton_rank}, {tree.rollouts} rollouts -> {out}",
          file=stdout)
    return 0


def _run_instance(task_name: str, instance_seed: int, rng_seed: int,
                  timeout: float, virtual_time: bool) -> RunRecord:
    task = TASKS[task_name]
    base = load_bundled(task.domain_file, task.problem_file)
    problem = task.randomize(base, random.Random(instance_seed))
    cfg = SearchConfig(alpha=task.alpha, rng_seed=rng_seed,
                       session_time=timeout, total_budget=timeout)
    clock = VirtualClock() if virtual_time else WallClock()
    trace, tree = etamp_with_tree(problem, cfg, clock=clock,
                                  instance_seed=instance_seed)
    if trace is None:
        return RunRecord(task_name, instance_seed, rng_seed, False, timeout,
                         tree.rollouts, len(tree.children), None, None)
    return RunRecord(task_name, instance_seed, rng_seed, True,
                     tree.first_success_time or 0.0, tree.rollouts,
                     len(tree.children), trace.skeleton_rank,
                     trace.motion_cost)


def _aggregate_row(task_name: str, records: list[RunRecord]) -> list[str]:
    times = [r.time_to_first_plan for r in records]
    rate = sum(r.success for r in records) / len(records) if records else 0.0
    mean = statistics.fmean(times) if times else 0.0
    std = statistics.pstdev(times) if len(times) > 1 else 0.0
    return [task_name, "aggregate", "", repr(round(rate, 9)),
            repr(round(mean, 6)), repr(round(std, 6)),
            str(sum(r.rollouts for r in records)), "", ""]


def run_bench(task_names: list[str], n: int, master_seed: int = 0,
              workers: int = 1, timeout: float | None = None,
              virtual_time: bool = False, out=None) -> str:
    """Writes one row per run plus one aggregate row per task; the whole CSV
    is a deterministic function of the master seed in virtual-time mode."""
    for name in task_names:
        if name not in TASKS:
            raise KeyError(f"unknown task {name!r}; known: {sorted(TASKS)}")
    seeder = random.Random(master_seed)
    jobs = []
    for name in task_names:
        t = timeout if timeout is not None else TASKS[name].timeout
        for _ in range(n):
            jobs.append((name, seeder.randrange(2**31), seeder.randrange(2**31), t))

    results: dict[int, RunRecord] = {}
    if workers > 1 and jobs:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_run_instance, name, iseed, rseed, t, virtual_time): i
                for i, (name, iseed, rseed, t) in enumerate(jobs)
            }
            for fut in concurrent.futures.as_completed(futures):
                i = futures[fut]
                name, iseed, rseed, t = jobs[i]
                try:
                    results[i] = fut.result()
                except Exception:
                    results[i] = RunRecord(name, iseed, rseed, False, t, 0, 0, None, None)
    else:
        for i, (name, iseed, rseed, t) in enumerate(jobs):
            try:
                results[i] = _run_instance(name, iseed, rseed, t, virtual_time)
            except Exception:
                results[i] = RunRecord(name, iseed, rseed, False, t, 0, 0, None, None)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for name in task_names:
        recs = [results[i] for i, j in enumerate(jobs) if j[0] == name]
        for r in recs:
            writer.writerow(r.row())
        if recs:
            writer.writerow(_aggregate_row(name, recs))
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text
