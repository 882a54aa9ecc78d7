"""Skeleton planning: iterate expansion levels, take the k cheapest action
plans on the enriched task, and retrace each into a stream-complete
skeleton whose action subsequence equals the source plan."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .expand import DEFAULT_MAX_LEVEL, ExpansionResult, optimistic_expand
from .model import (
    GroundOperator,
    Obj,
    Problem,
    State,
    apply,
    applicable,
)
from .topk import (
    PrecedenceGoal,
    SymbolicPlan,
    _dependency_closure,
    plan_with_precedence,
    top_k,
)

log = logging.getLogger(__name__)


class MalformedSkeletonError(Exception):
    pass


@dataclass
class Layer:
    kind: str  # "decision" | "transition"
    steps: list[GroundOperator]


@dataclass
class Skeleton:
    id: int
    steps: tuple[GroundOperator, ...]
    source_plan: SymbolicPlan
    level: int = 0

    @property
    def binding_variables(self) -> list[Obj]:
        """All optimistic objects in production (first-use) order."""
        out = []
        for s in self.steps:
            out.extend(s.outputs)
        return out

    @property
    def horizon(self) -> int:
        """Count of independent binding decisions."""
        return sum(
            1 for s in self.steps if s.is_stream and s.schema.decision
        )

    @property
    def actions(self) -> tuple[GroundOperator, ...]:
        return tuple(s for s in self.steps if not s.is_stream)

    def signature(self) -> tuple:
        """Step operators with placeholders renamed positionally, for
        duplicate detection across sessions and prefix matching."""
        rename: dict[str, str] = {}

        def norm(o: Obj) -> str:
            if not o.optimistic:
                return o.name
            return rename.setdefault(o.name, f"_v{len(rename)}")

        return tuple(
            (s.name, tuple(norm(a) for a in s.args), tuple(norm(o) for o in s.outputs))
            for s in self.steps
        )

    def layer_signature(self) -> tuple:
        """Per-layer operator signature, for prefix sharing."""
        sig = iter(self.signature())
        out = []
        for layer in layerize(self):
            out.append((layer.kind, tuple(next(sig) for _ in layer.steps)))
        return tuple(out)


def layerize(skeleton: Skeleton) -> list[Layer]:
    """Partition steps into alternating layers: each decision stream is its
    own decision layer; maximal runs of dependent streams and actions form
    transition layers.  Concatenating layers restores step order."""
    produced = {o for s in skeleton.steps for o in s.outputs}
    available: set[Obj] = set()
    layers: list[Layer] = []
    for step in skeleton.steps:
        for a in step.args:
            if a.optimistic and a not in available:
                if a in produced:
                    raise MalformedSkeletonError(
                        f"step {step!r} consumes {a.name} before it is produced"
                    )
                raise MalformedSkeletonError(
                    f"step {step!r} consumes {a.name}, which no step produces"
                )
        if step.is_stream and step.schema.decision:
            layers.append(Layer("decision", [step]))
        else:
            if not layers or layers[-1].kind != "transition":
                layers.append(Layer("transition", []))
            layers[-1].steps.append(step)
        available.update(step.outputs)
    return layers


def _canonicalize(
    steps: list[GroundOperator], init: State
) -> list[GroundOperator] | None:
    """Reorder stream steps so each one sits immediately before the first
    action that (transitively) consumes its outputs, in dependency order
    with decision streams first.  Falls back to None if the reordering is
    not symbolically applicable (e.g. fluent-dependent streams)."""
    stream_steps = [s for s in steps if s.is_stream]
    actions = [s for s in steps if not s.is_stream]
    producer = {o: s for s in stream_steps for o in s.outputs}
    placed: set[GroundOperator] = set()
    out: list[GroundOperator] = []

    def emit(inst: GroundOperator):
        if inst in placed:
            return
        placed.add(inst)
        deps = [producer[a] for a in inst.args if a in producer]
        deps.sort(key=lambda d: (not d.schema.decision, d.sort_key))
        for d in deps:
            emit(d)
        if inst.is_stream:
            # decision inputs of a dependent stream must already be emitted
            out.append(inst)

    for act in actions:
        needed = [producer[a] for a in act.args if a in producer]
        needed.sort(key=lambda d: (not d.schema.decision, d.sort_key))
        for inst in needed:
            emit(inst)
        out.append(act)
        placed.add(act)
    # streams certifying goal literals (rare): keep them at the end
    for s in stream_steps:
        if s not in placed:
            out.append(s)

    state = init
    for step in out:
        if not applicable(state, step):
            return None
        state = apply(state, step)
    return out


@dataclass
class SkeletonPlanResult:
    skeletons: list[Skeleton]
    partial: bool = False  # max-level exhausted with fewer than k plans
    level: int = 0


def top_k_skeletons(
    problem: Problem,
    k: int,
    max_level: int = DEFAULT_MAX_LEVEL,
    node_budget: int | None = None,
) -> SkeletonPlanResult:
    """Levels are tried in order; the first level yielding k action plans is
    retraced and returned.  If no level reaches k, the deepest level with
    any plans is used and the result is flagged partial."""
    if k < 1:
        raise ValueError("k must be >= 1")
    kwargs = {} if node_budget is None else {"node_budget": node_budget}
    best: tuple[ExpansionResult, list[SymbolicPlan]] | None = None
    for level in range(0, max_level + 1):
        enriched = optimistic_expand(problem.objects, problem.init, problem.streams, level)
        result = top_k(
            enriched.objects, enriched.state, problem.goal, problem.actions, k, **kwargs
        )
        if result.plans:
            best = (enriched, result.plans)
        if len(result.plans) < k:
            continue
        return SkeletonPlanResult(
            _retrace_all(problem, enriched, result.plans), partial=False, level=level
        )
    if best is None:
        return SkeletonPlanResult([], partial=True, level=max_level)
    enriched, plans = best
    return SkeletonPlanResult(
        _retrace_all(problem, enriched, plans), partial=True, level=enriched.level
    )


def _retrace_all(
    problem: Problem, enriched: ExpansionResult, plans: list[SymbolicPlan]
) -> list[Skeleton]:
    skeletons: list[Skeleton] = []
    for plan in plans:
        sk = retrace(problem, enriched, plan, len(skeletons))
        if sk is None:
            log.info("dropping plan with no stream interleaving: %s", plan.steps)
            continue
        skeletons.append(sk)
    return skeletons


def retrace(
    problem: Problem,
    enriched: ExpansionResult,
    plan: SymbolicPlan,
    skeleton_id: int = 0,
) -> Skeleton | None:
    """Interleave the expansion's stream instances with a single action
    plan, preserving the action order exactly."""
    if not plan.steps:
        return Skeleton(skeleton_id, (), plan, level=enriched.level)
    pgoal = PrecedenceGoal(frozenset(problem.goal), tuple(plan.steps))
    # Fast path: when stream preconditions do not depend on action fluents
    # (the common case), the canonical placement is already a valid
    # interleaving, so the subsequence search is unnecessary.
    closure = _dependency_closure(plan.steps, enriched.instantiations)
    canonical = _canonicalize(closure + list(plan.steps), problem.init)
    if canonical is not None:
        return Skeleton(skeleton_id, tuple(canonical), plan, level=enriched.level)
    steps = plan_with_precedence(
        problem.objects,
        problem.init,
        pgoal,
        problem.actions,
        problem.streams,
        enriched.instantiations,
    )
    if steps is None:
        return None
    canonical = _canonicalize(steps, problem.init)
    if canonical is not None:
        steps = canonical
    return Skeleton(skeleton_id, tuple(steps), plan, level=enriched.level)
