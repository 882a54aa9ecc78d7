import io
import json
import math
import random
from dataclasses import dataclass, field

import pytest

import synth
from tamp2d.bench import _replace_bodies, load_bundled
from tamp2d.geometry import make_backend
from tamp2d.skeleton import top_k_skeletons
from tamp2d.tree import (
    ExtendedTree,
    RewardParams,
    SearchConfig,
    VirtualClock,
    etamp,
    etamp_with_tree,
    extended_tree_search,
    pw_test,
    reward,
    select_child,
)


# --- reward -------------------------------------------------------------------

def test_reward_examples():
    assert math.isclose(reward(4, 0, 0.0, False), 0.125, abs_tol=1e-12)
    assert math.isclose(reward(2, 2, 4.0, True), 1.17, abs_tol=1e-12)


def test_reward_motion_cost_limit():
    # as motion cost grows, failure reward approaches p_t/H from above
    vals = [reward(4, 0, mc, False) for mc in (1.0, 10.0, 1e6)]
    assert vals == sorted(vals, reverse=True)
    assert math.isclose(vals[-1], 0.1 / 4, rel_tol=1e-5)


def test_reward_zero_horizon_is_success_bonus_alone():
    assert reward(0, 0, 5.0, True) == 1.0
    assert reward(0, 0, 5.0, False) == 0.0


def test_reward_validation():
    with pytest.raises(ValueError):
        reward(2, 3, 0.0, True)
    with pytest.raises(ValueError):
        reward(2, 1, -0.1, True)
    with pytest.raises(ValueError):
        RewardParams(p_t=-1.0)


# --- progressive widening -----------------------------------------------------

def test_pw_schedule_alpha_026():
    assert pw_test(1, 0.26)
    assert not any(pw_test(v, 0.26) for v in range(2, 15))
    assert pw_test(15, 0.26)
    assert not any(pw_test(v, 0.26) for v in range(16, 69))
    assert pw_test(69, 0.26)
    with pytest.raises(ValueError):
        pw_test(0, 0.26)


def test_pw_child_count_identity():
    for alpha in (0.26, 0.5):
        count = 0
        for n in range(1, 10_001):
            count += pw_test(n, alpha)
            assert count == math.floor(n ** alpha)


# --- UCB selection ------------------------------------------------------------

@dataclass
class FakeChild:
    visits: int = 0
    value_sum: float = 0.0


@dataclass
class FakeNode:
    visits: int
    children: list = field(default_factory=list)


def test_select_child_spec_example():
    node = FakeNode(12, [FakeChild(10, 5.0), FakeChild(2, 0.8)])
    assert select_child(node, math.sqrt(2)) is node.children[1]


def test_select_child_single_child():
    node = FakeNode(5, [FakeChild(5, 1.0)])
    assert select_child(node, math.sqrt(2)) is node.children[0]


def test_select_child_unvisited_first_in_insertion_order():
    node = FakeNode(10, [FakeChild(9, 9.0), FakeChild(0), FakeChild(0)])
    assert select_child(node, math.sqrt(2)) is node.children[1]


def test_select_child_requires_children():
    with pytest.raises(ValueError):
        select_child(FakeNode(1), 1.0)


def test_argmax_invariance_under_joint_scaling():
    rng = random.Random(0)
    for _ in range(200):
        node = FakeNode(
            rng.randint(4, 50),
            [FakeChild(rng.randint(1, 20), rng.uniform(0, 10)) for _ in range(4)],
        )
        lam = rng.uniform(0.1, 10)
        base = node.children.index(select_child(node, math.sqrt(2)))
        scaled = FakeNode(node.visits, [
            FakeChild(c.visits, c.value_sum * lam) for c in node.children
        ])
        assert scaled.children.index(select_child(scaled, math.sqrt(2) * lam)) == base


# --- rollouts on synthetic problems --------------------------------------------

def make_tree(problem, backend_cls, cfg=None, **backend_kwargs):
    backend = backend_cls(problem, 0, **backend_kwargs)
    cfg = cfg or SearchConfig(rng_seed=0, session_time=1.0, total_budget=1.0)
    return ExtendedTree(backend, cfg, clock=VirtualClock())


def test_pw_exactness_on_a_live_decision_node():
    problem = synth.one_decision_problem("synth-pw")
    tree = make_tree(problem, synth.AlwaysFailTransitionBackend)
    tree.add_skeletons(top_k_skeletons(problem, 1).skeletons)
    for n in range(1, 10_001):
        tree.rollout()
        node = next(iter(tree.trie_roots.values()))
        assert node.visits == n
        assert len(node.children) == math.floor(n ** tree.cfg.alpha)


def test_first_rollout_expands_one_child_per_layer():
    problem = synth.two_gate_problem("synth-gate")
    tree = make_tree(problem, synth.GateBackend)
    tree.add_skeletons(top_k_skeletons(problem, 2).skeletons)
    result = tree.rollout()
    assert tree.visits == 1
    for node in tree.trie_roots.values():
        assert len(node.children) == 1


def test_backprop_conservation_and_telemetry():
    problem = load_bundled("unpacking.dom", "unpack2.prob")
    buf = io.StringIO()
    backend = make_backend(problem, 0)
    cfg = SearchConfig(rng_seed=1)
    tree = ExtendedTree(backend, cfg, telemetry=buf, clock=VirtualClock())
    tree.add_skeletons(top_k_skeletons(problem, 10).skeletons)
    rewards = []
    for _ in range(300):
        rewards.append(tree.rollout().reward)
    records = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert [r["rollout"] for r in records] == list(range(1, 301))
    assert set(records[0]) == {"rollout", "skeleton", "depth", "reward", "time"}
    # conservation at the extended root: arm visits partition rollouts and
    # arm value sums partition the reward mass
    assert sum(a.visits for a in tree.children) == 300
    assert math.isclose(sum(a.value_sum for a in tree.children), sum(rewards),
                        rel_tol=1e-9)
    by_arm = {}
    for r in records:
        by_arm.setdefault(r["skeleton"], 0.0)
        by_arm[r["skeleton"]] += r["reward"]
    for arm in tree.children:
        if arm.visits:
            assert math.isclose(arm.value_sum, by_arm[arm.skeleton.id], abs_tol=1e-6)


def test_environment_isolation_across_visits():
    problem = load_bundled("unpacking.dom", "unpack2.prob")
    backend = make_backend(problem, 0)
    tree = ExtendedTree(backend, SearchConfig(rng_seed=2), clock=VirtualClock())
    tree.add_skeletons(top_k_skeletons(problem, 5).skeletons)
    for _ in range(200):
        tree.rollout()
    stack = list(tree.trie_roots.values())
    while stack:
        node = stack.pop()
        for child in node.children:
            if child.feasible:
                assert backend.restore(child.handle) == child.state
            stack.extend(child.continuations.values())


def test_zero_deadline_returns_none():
    problem = synth.two_gate_problem("synth-gate")
    tree = make_tree(problem, synth.GateBackend)
    tree.add_skeletons(top_k_skeletons(problem, 2).skeletons)
    assert extended_tree_search(tree, deadline=tree.clock.now()) is None


def test_empty_skeleton_list_returns_none():
    problem = synth.two_gate_problem("synth-gate")
    tree = make_tree(problem, synth.GateBackend)
    assert extended_tree_search(tree, deadline=tree.clock.now() + 100) is None


def test_bandit_concentrates_on_better_arm():
    hits = 0
    for seed in range(5):
        counts = synth.simulate_bernoulli_root((0.8, 0.2), 1000, random.Random(seed))
        hits += counts[0] >= 700
    assert hits >= 4


def test_incremental_sessions_reach_higher_rank_skeleton():
    problem = synth.two_gate_problem("synth-gate")
    backend = synth.GateBackend(problem, 0)
    cfg = SearchConfig(rng_seed=0, batch_size=1, session_time=50, total_budget=1000)
    trace, tree = etamp_with_tree(problem, cfg, backend=backend, clock=VirtualClock())
    assert trace is not None
    assert trace.skeleton_rank == 1  # the cost-2 route
    # session 1 (only the rank-0 skeleton) cannot succeed: the first success
    # happens at or after the 50-tick session boundary
    assert tree.first_success_time >= 50


def test_prefix_sharing_node_count_and_warm_start():
    base = load_bundled("unpacking.dom", "unpack2.prob")
    # move the tall body aside so the direct skeleton is feasible
    problem = _replace_bodies(base, {"body2": (0.3, 0.2, 0.0)})
    skeletons = top_k_skeletons(problem, 8).skeletons
    direct = skeletons[0]
    extended = next(
        s for s in skeletons
        if len(s.actions) == 2 and s.layer_signature()[:2] == direct.layer_signature()[:2]
    )
    backend = make_backend(problem, 0)
    tree = ExtendedTree(backend, SearchConfig(rng_seed=0), clock=VirtualClock())
    tree.add_skeletons([direct])
    while tree.best_trace is None:
        tree.rollout()
    assert tree.node_count() == 2
    layer0 = next(iter(tree.trie_roots.values()))
    n_children = len(layer0.children)
    feasible_before = [c for c in layer0.children if c.feasible]
    assert feasible_before

    tree.add_skeletons([extended])
    arm = tree.children[-1]
    assert arm.shared_len == 2
    result = tree.rollout()
    assert result.arm is arm  # unvisited arms are tried first
    # warm start: the first binding attempt reuses an existing feasible
    # child instead of widening the shared node
    assert len(layer0.children) == n_children
    # one shared copy of the 2-layer prefix plus the 2-layer suffix
    assert tree.node_count() == 4


def test_etamp_solves_unpack2():
    problem = load_bundled("unpacking.dom", "unpack2.prob")
    trace = etamp(problem, SearchConfig(rng_seed=0, session_time=30, total_budget=60))
    assert trace is not None
    assert trace.steps[-1].name == "pick-place"
    assert trace.motion_cost > 0
