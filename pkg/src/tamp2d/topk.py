"""Cost-ordered enumeration of the k cheapest plans, and precedence-chain
planning used to retrace stream steps into action plans.

Plans are walks in the ground transition graph, so two plans may share
states; we enumerate the k shortest walks from the initial state to any
goal state with a pop-bounded Dijkstra (each state may be settled up to k
times).  Ties are broken lexicographically by the ground-operator order,
so equal-cost plans are enumerated exhaustively and deterministically.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

from .model import (
    ActionSchema,
    GroundOperator,
    Literal,
    Obj,
    State,
    StreamSchema,
    applicable,
    apply,
    ground_reachable,
)

DEFAULT_NODE_BUDGET = 10**6


@dataclass
class SymbolicPlan:
    steps: tuple[GroundOperator, ...]
    cost: float

    def __len__(self):
        return len(self.steps)


@dataclass
class TopKResult:
    plans: list[SymbolicPlan]
    complete: bool = True  # False when the node budget ran out first


@dataclass(frozen=True)
class PrecedenceGoal:
    """A base goal plus an ordered chain of ground actions that must appear
    as the exact action subsequence of the plan."""

    base_goal: frozenset[Literal]
    chain: tuple[GroundOperator, ...]

    def __post_init__(self):
        if any(op.is_stream for op in self.chain):
            raise ValueError("precedence chains contain action operators only")


def top_k(
    objects: frozenset[Obj],
    init: State,
    goal: frozenset[Literal],
    actions: tuple[ActionSchema, ...],
    k: int,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> TopKResult:
    """The ``min(k, available)`` cheapest distinct plans, cost-nondecreasing,
    ties in lexicographic step order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ops, relaxed = ground_reachable(actions, objects, init)
    if not all(g in relaxed for g in goal):
        return TopKResult([], complete=True)  # goal not even relaxed-reachable
    goal = frozenset(goal)

    # Heap entries carry the action-index sequence as the tiebreaker, which
    # doubles as the plan reconstruction record.
    heap: list[tuple[float, tuple[int, ...], State]] = [(0.0, (), init)]
    pops: dict[State, int] = {}
    succ_cache: dict[tuple[State, int], State] = {}
    plans: list[SymbolicPlan] = []
    budget = node_budget

    while heap and budget > 0:
        budget -= 1
        cost, seq, state = heapq.heappop(heap)
        seen = pops.get(state, 0)
        if seen >= k:
            continue
        pops[state] = seen + 1
        if state.entails(goal):
            plans.append(SymbolicPlan(tuple(ops[i] for i in seq), cost))
            if len(plans) == k:
                return TopKResult(plans, complete=True)
        for i, op in enumerate(ops):
            key = (state, i)
            nxt = succ_cache.get(key)
            if nxt is None:
                if not applicable(state, op):
                    continue
                nxt = apply(state, op)
                succ_cache[key] = nxt
            heapq.heappush(heap, (cost + op.cost, seq + (i,), nxt))

    return TopKResult(plans, complete=not heap)


def _dependency_closure(
    chain: tuple[GroundOperator, ...],
    instances: list[GroundOperator],
) -> list[GroundOperator]:
    """Stream instances transitively producing the optimistic objects the
    chain consumes."""
    producer: dict[Obj, GroundOperator] = {}
    for inst in instances:
        for o in inst.outputs:
            producer[o] = inst
    needed: list[GroundOperator] = []
    seen: set[GroundOperator] = set()

    def visit(obj: Obj):
        if not obj.optimistic:
            return
        inst = producer.get(obj)
        if inst is None or inst in seen:
            return
        seen.add(inst)
        for a in inst.args:
            visit(a)
        needed.append(inst)

    for act in chain:
        for a in act.args:
            visit(a)
    return needed


def plan_with_precedence(
    objects: frozenset[Obj],
    init: State,
    pgoal: PrecedenceGoal,
    actions: tuple[ActionSchema, ...],
    streams: tuple[StreamSchema, ...],
    stream_instances: list[GroundOperator],
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> list[GroundOperator] | None:
    """A fewest-step plan whose action subsequence equals the chain exactly,
    interleaved with stream operators drawn from ``stream_instances``.
    Returns None when no interleaving exists."""
    if not pgoal.chain:
        raise ValueError("precedence chain must be nonempty")
    relevant = _dependency_closure(pgoal.chain, stream_instances)

    plan = _precedence_search(init, pgoal, relevant, node_budget)
    if plan is None and len(relevant) < len(stream_instances):
        # A certified literal the chain needs may come from a stream whose
        # outputs the chain never mentions; retry against the full universe.
        plan = _precedence_search(init, pgoal, stream_instances, node_budget)
    return plan


def _precedence_search(
    init: State,
    pgoal: PrecedenceGoal,
    streams: list[GroundOperator],
    node_budget: int,
) -> list[GroundOperator] | None:
    streams = sorted(streams, key=lambda o: o.sort_key)
    chain = pgoal.chain
    n = len(chain)
    start = (init, 0)
    queue: deque[tuple[State, int]] = deque([start])
    parent: dict[tuple[State, int], tuple[tuple[State, int], GroundOperator]] = {start: None}
    budget = node_budget

    while queue and budget > 0:
        budget -= 1
        state, idx = queue.popleft()
        if idx == n and state.entails(pgoal.base_goal):
            steps = []
            node = (state, idx)
            while parent[node] is not None:
                node, op = parent[node]
                steps.append(op)
            steps.reverse()
            return steps
        candidates = []
        if idx < n and applicable(state, chain[idx]):
            candidates.append((chain[idx], idx + 1))
        for s in streams:
            if applicable(state, s):
                candidates.append((s, idx))
        for op, nidx in candidates:
            nxt = (apply(state, op), nidx)
            if nxt not in parent:
                parent[nxt] = ((state, idx), op)
                queue.append(nxt)
    return None
