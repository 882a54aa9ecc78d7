"""Extended decision tree: a UCB1 skeleton bandit at the extended root with
progressive-widening UCT beneath it.

The binding search for all skeletons lives in one physical trie keyed by
layer signatures, so skeletons sharing an operator prefix share nodes,
visits, and found bindings.  Decision layers hold sampled-binding children
under progressive widening; transition layers hold outcome children
(deduplicated environment results), widened the same way.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field
from typing import Any, Callable, TextIO

from .geometry import EnvState, EnvironmentBackend, make_backend
from .model import GroundOperator, Obj, PlanTrace, Problem, TraceStep
from .skeleton import Layer, Skeleton, layerize, top_k_skeletons

DEFAULT_ALPHA = 0.26
DEFAULT_UCB_C = math.sqrt(2.0)
DEFAULT_K_BATCH = 50
DEFAULT_SESSION_TIME = 250.0
DEFAULT_TOTAL_BUDGET = 300.0


@dataclass
class RewardParams:
    p_t: float = 0.1
    p_m: float = 1.0

    def __post_init__(self):
        if self.p_t < 0 or self.p_m < 0:
            raise ValueError("reward weights must be nonnegative")


@dataclass
class SearchConfig:
    alpha: float = DEFAULT_ALPHA
    ucb_c: float = DEFAULT_UCB_C
    session_time: float = DEFAULT_SESSION_TIME
    total_budget: float = DEFAULT_TOTAL_BUDGET
    batch_size: int = DEFAULT_K_BATCH
    rng_seed: int = 0
    reward_params: RewardParams = field(default_factory=RewardParams)
    anytime: bool = False  # default stops at the first feasible plan
    max_skeleton_level: int = 4

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.session_time > self.total_budget:
            raise ValueError("session time cannot exceed the total budget")


def reward(h: int, d_end: int, motion_cost: float, success: bool,
           params: RewardParams = RewardParams()) -> float:
    """Terminal reward: progress and motion-economy terms plus a unit bonus
    on success.  A zero-horizon skeleton earns the success bonus alone."""
    if d_end < 0 or (h > 0 and d_end > h):
        raise ValueError("d_end must lie in 0..h")
    if motion_cost < 0:
        raise ValueError("motion cost must be nonnegative")
    r_end = 1.0 if success else 0.0
    if h == 0:
        return r_end
    return params.p_t * ((1.0 + d_end) / h + params.p_m / (motion_cost + 1.0)) + r_end


def pw_test(visits: int, alpha: float) -> bool:
    """True when the visit count crosses the next widening threshold, so a
    node visited n times holds exactly floor(n^alpha) children."""
    if visits < 1:
        raise ValueError("visits must be >= 1")
    return math.floor(visits ** alpha) > math.floor((visits - 1) ** alpha)


def select_child(node, ucb_c: float):
    """UCB1 over ``node.children``: mean + c*sqrt(ln(N)/n), unvisited
    children first in insertion order, ties by insertion order."""
    children = node.children
    if not children:
        raise ValueError("select_child on a node with no children")
    for child in children:
        if child.visits == 0:
            return child
    log_n = math.log(max(node.visits, 1))
    best, best_score = None, -math.inf
    for child in children:
        score = child.value_sum / child.visits + ucb_c * math.sqrt(log_n / child.visits)
        if score > best_score:
            best, best_score = child, score
    return best


# --- clocks -------------------------------------------------------------------

class WallClock:
    def now(self) -> float:
        return time.monotonic()

    def tick(self) -> None:
        pass


class VirtualClock:
    """Advances one unit per rollout; makes whole searches replayable."""

    def __init__(self):
        self.t = 0.0

    def now(self) -> float:
        return self.t

    def tick(self) -> None:
        self.t += 1.0


# --- tree structure -----------------------------------------------------------

@dataclass
class Child:
    """One chosen binding (decision layer) or one environment outcome
    (transition layer)."""

    values: tuple  # per-step tuples of output values, positional
    feasible: bool
    state: EnvState | None  # env snapshot after the layer; None if infeasible
    handle: int | None
    cost_delta: float = 0.0
    visits: int = 0
    value_sum: float = 0.0
    continuations: dict = field(default_factory=dict)  # layer sig -> LayerNode

    @property
    def children(self):  # uniform interface for counting
        return list(self.continuations.values())


@dataclass
class LayerNode:
    kind: str  # "decision" | "transition"
    depth: int  # layer index within the skeleton
    visits: int = 0
    value_sum: float = 0.0
    children: list[Child] = field(default_factory=list)


@dataclass
class Arm:
    """Extended-root child: one skeleton plus its route through the trie."""

    skeleton: Skeleton
    layers: list[Layer]
    signature: tuple
    shared_len: int  # layers that already existed in the trie when attached
    prefix_done: bool = False
    visits: int = 0
    value_sum: float = 0.0
    best_trace: PlanTrace | None = None

    @property
    def horizon(self) -> int:
        return self.skeleton.horizon


@dataclass
class _ChildView:
    """Restricts UCB selection to a subset of a node's children."""

    visits: int
    children: list


@dataclass
class RolloutResult:
    arm: Arm
    depth: int
    reward: float
    success: bool
    trace: PlanTrace | None


def _freeze(value):
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, float):
        return round(value, 9)
    return value


class ExtendedTree:
    """The persistent search object: extended root, trie, environment, RNG.
    Skeletons accumulate across sessions; rollouts may run at any time."""

    def __init__(self, backend: EnvironmentBackend, cfg: SearchConfig,
                 telemetry: TextIO | None = None,
                 clock: WallClock | VirtualClock | None = None):
        self.backend = backend
        self.cfg = cfg
        self.rng = random.Random(cfg.rng_seed)
        self.telemetry = telemetry
        self.clock = clock or WallClock()
        self.visits = 0
        self.children: list[Arm] = []  # attached skeleton roots
        self.trie_roots: dict = {}  # first-layer signature -> LayerNode
        self.seen_signatures: set = set()
        self.rollouts = 0
        self.best_trace: PlanTrace | None = None
        self.first_success_time: float | None = None  # elapsed on this clock
        self.start_time = self.clock.now()
        self.root_handle = backend.snapshot(backend.current)

    # -- skeleton management
    def add_skeletons(self, skeletons: list[Skeleton]) -> int:
        """Attach unseen skeletons as new extended-root children; unvisited
        arms are then tried first by the selection rule."""
        added = 0
        for sk in skeletons:
            sig = sk.signature()
            if sig in self.seen_signatures:
                continue
            self.seen_signatures.add(sig)
            self._attach(sk)
            added += 1
        return added

    def _attach(self, skeleton: Skeleton) -> Arm:
        layers = layerize(skeleton)
        sig = skeleton.layer_signature()
        shared = 0
        nodes = self.trie_roots
        for i, entry in enumerate(sig):
            node = nodes.get(entry)
            if node is None:
                break
            shared = i + 1
            # shared prefix continues through every child of this node
            merged: dict = {}
            for child in node.children:
                merged.update(child.continuations)
            nodes = merged
        arm = Arm(skeleton, layers, sig, shared_len=shared,
                  prefix_done=(shared == 0))
        self.children.append(arm)
        return arm

    def _layer_node(self, parent_map: dict, entry, kind: str, depth: int) -> LayerNode:
        node = parent_map.get(entry)
        if node is None:
            node = LayerNode(kind, depth)
            parent_map[entry] = node
        return node

    # -- layer execution
    def _run_decision(self, layer: Layer, state: EnvState,
                      bindings: dict[Obj, Any]) -> Child:
        step = layer.steps[0]
        sample = self.backend.sample_stream(state, step, bindings, self.rng)
        if not sample.feasible:
            return Child((), False, None, None)
        handle = self.backend.snapshot(state)
        return Child((tuple(sample.values),), True, state, handle,
                     cost_delta=sample.cost_delta)

    def _run_transition(self, layer: Layer, state: EnvState,
                        bindings: dict[Obj, Any]) -> Child:
        values: list[tuple] = []
        cost = 0.0
        local = dict(bindings)
        for step in layer.steps:
            if step.is_stream:
                sample = self.backend.sample_stream(state, step, local, self.rng)
                if not sample.feasible:
                    return Child((), False, None, None)
                for obj, val in zip(step.outputs, sample.values):
                    local[obj] = val
                values.append(tuple(sample.values))
                cost += sample.cost_delta
            else:
                outcome = self.backend.apply_transition(state, step, local)
                if not outcome.feasible:
                    return Child((), False, None, None)
                state = outcome.state
                values.append(())
                cost += outcome.cost_delta
        handle = self.backend.snapshot(state)
        return Child(tuple(values), True, state, handle, cost_delta=cost)

    def _bind_layer(self, layer: Layer, child: Child, bindings: dict[Obj, Any]):
        if not child.feasible:
            return
        if layer.kind == "decision":
            for obj, val in zip(layer.steps[0].outputs, child.values[0]):
                bindings[obj] = val
        else:
            for step, vals in zip(layer.steps, child.values):
                for obj, val in zip(step.outputs, vals):
                    bindings[obj] = val

    # -- rollout
    def rollout(self) -> RolloutResult | None:
        if not self.children:
            return None
        self.visits += 1
        arm = select_child(self, self.cfg.ucb_c)

        state = self.backend.restore(self.root_handle)
        bindings: dict[Obj, Any] = {}
        path: list[LayerNode | Child] = []
        nodes = self.trie_roots
        motion_cost = 0.0
        decisions_bound = 0
        success = True
        depth = 0

        for i, (layer, entry) in enumerate(zip(arm.layers, arm.signature)):
            node = self._layer_node(nodes, entry, layer.kind, i)
            node.visits += 1
            path.append(node)
            child = self._choose_child(arm, node, i, layer, state, bindings)
            path.append(child)
            if not child.feasible:
                success = False
                depth = i
                break
            state = self.backend.restore(child.handle)
            self._bind_layer(layer, child, bindings)
            motion_cost += child.cost_delta
            if layer.kind == "decision":
                decisions_bound += 1
            if i + 1 == arm.shared_len:
                arm.prefix_done = True
            depth = i + 1
            nodes = child.continuations

        h = arm.horizon
        r = reward(h, min(decisions_bound, h) if h else 0, motion_cost,
                   success, self.cfg.reward_params)
        trace = None
        if success:
            trace = self._build_trace(arm, path, r, motion_cost)
            if arm.best_trace is None or r > (arm.best_trace.reward or -1):
                arm.best_trace = trace
            if self.best_trace is None:
                self.first_success_time = self.clock.now() - self.start_time
            if self.best_trace is None or r > (self.best_trace.reward or -1):
                self.best_trace = trace
        # back-propagate
        arm.visits += 1
        arm.value_sum += r
        for item in path:
            if isinstance(item, Child):
                item.visits += 1
                item.value_sum += r
            # LayerNode visits were incremented on descent; add value now
            else:
                item.value_sum += r
        self.rollouts += 1
        if self.telemetry is not None:
            self.telemetry.write(json.dumps({
                "rollout": self.rollouts,
                "skeleton": arm.skeleton.id,
                "depth": depth,
                "reward": round(r, 9),
                "time": round(self.clock.now(), 6),
            }, separators=(",", ":")) + "\n")
        return RolloutResult(arm, depth, r, success, trace)

    def _choose_child(self, arm: Arm, node: LayerNode, depth: int,
                      layer: Layer, state: EnvState,
                      bindings: dict[Obj, Any]) -> Child:
        # warm start: inside a shared prefix, a new arm exploits the best
        # feasible binding already found rather than widening
        if depth < arm.shared_len and not arm.prefix_done:
            feasible = [c for c in node.children if c.feasible]
            if feasible:
                best = max(
                    feasible,
                    key=lambda c: c.value_sum / c.visits if c.visits else math.inf,
                )
                return best
        if pw_test(node.visits, self.cfg.alpha):
            run = self._run_decision if layer.kind == "decision" else self._run_transition
            child = run(layer, state, bindings)
            # transitions have few distinct outcomes: merge duplicates
            if layer.kind == "transition":
                key = (child.feasible, _freeze(child.values), child.state)
                for existing in node.children:
                    if (existing.feasible, _freeze(existing.values), existing.state) == key:
                        return existing
            node.children.append(child)
            return child
        # infeasible children are dead ends; only revisit them when nothing
        # feasible has been found yet
        feasible = [c for c in node.children if c.feasible]
        if feasible:
            return select_child(_ChildView(node.visits, feasible), self.cfg.ucb_c)
        return select_child(node, self.cfg.ucb_c)

    def _build_trace(self, arm: Arm, path: list, r: float,
                     motion_cost: float) -> PlanTrace:
        bindings: dict[str, Any] = {}
        children = [p for p in path if isinstance(p, Child)]
        steps: list[TraceStep] = []
        cum = 0.0
        for layer, child in zip(arm.layers, children):
            if layer.kind == "decision":
                step_values = [child.values[0]]
            else:
                step_values = list(child.values)
            cum += child.cost_delta
            for step, vals in zip(layer.steps, step_values):
                for obj, val in zip(step.outputs, vals):
                    bindings[obj.name] = val
                values = {
                    a.name: bindings[a.name]
                    for a in step.args + step.outputs
                    if a.optimistic and a.name in bindings
                }
                steps.append(TraceStep(
                    name=step.name,
                    args=tuple(a.name for a in step.args),
                    values=values,
                    motion_cost=cum,
                ))
        return PlanTrace(steps=steps, motion_cost=motion_cost, reward=r,
                         skeleton_rank=arm.skeleton.id)

    def node_count(self) -> int:
        """Layer nodes in the trie (shared prefixes counted once)."""
        total = 0
        stack = list(self.trie_roots.values())
        while stack:
            node = stack.pop()
            total += 1
            for child in node.children:
                stack.extend(child.continuations.values())
        return total


def extended_tree_search(tree: ExtendedTree, deadline: float,
                         stop_on_success: bool = True) -> PlanTrace | None:
    """Runs rollouts until the deadline (on the tree's clock); returns the
    best successful trace found so far, or None."""
    if not tree.children:
        return None
    while tree.clock.now() < deadline:
        result = tree.rollout()
        tree.clock.tick()
        if result is None:
            break
        if stop_on_success and result.success:
            return tree.best_trace
    return tree.best_trace


def etamp(problem: Problem, cfg: SearchConfig,
          backend: EnvironmentBackend | None = None,
          telemetry: TextIO | None = None,
          clock: WallClock | VirtualClock | None = None,
          instance_seed: int | None = None) -> PlanTrace | None:
    """Session loop: grow the skeleton set by batch_size per session, merge
    new skeletons into the persistent tree, and search each session until
    its share of the budget runs out."""
    trace, _tree = etamp_with_tree(problem, cfg, backend=backend,
                                   telemetry=telemetry, clock=clock,
                                   instance_seed=instance_seed)
    return trace


def etamp_with_tree(problem: Problem, cfg: SearchConfig,
                    backend: EnvironmentBackend | None = None,
                    telemetry: TextIO | None = None,
                    clock: WallClock | VirtualClock | None = None,
                    instance_seed: int | None = None,
                    ) -> tuple[PlanTrace | None, ExtendedTree]:
    """Like ``etamp`` but also returns the search tree, whose counters
    (rollouts, arms, first-success time) feed the benchmark records."""
    if backend is None:
        backend = make_backend(
            problem,
            cfg.rng_seed if instance_seed is None else instance_seed,
        )
    tree = ExtendedTree(backend, cfg, telemetry=telemetry, clock=clock)
    start = tree.clock.now()
    total_deadline = start + cfg.total_budget
    session = 0
    exhausted = False
    while tree.clock.now() < total_deadline:
        session += 1
        if not exhausted:
            result = top_k_skeletons(problem, cfg.batch_size * session,
                                     max_level=cfg.max_skeleton_level)
            tree.add_skeletons(result.skeletons)
            exhausted = result.partial
        if not tree.children:
            return None, tree  # no plans exist at any expansion level
        deadline = min(tree.clock.now() + cfg.session_time, total_deadline)
        trace = extended_tree_search(tree, deadline,
                                     stop_on_success=not cfg.anytime)
        if trace is not None and not cfg.anytime:
            return trace, tree
    return tree.best_trace, tree
