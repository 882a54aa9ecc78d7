import pytest

from tamp2d.bench import load_bundled
from tamp2d.skeleton import MalformedSkeletonError, Skeleton, layerize, top_k_skeletons


def test_unpack2_rank1_is_the_direct_skeleton():
    p = load_bundled("unpacking.dom", "unpack2.prob")
    res = top_k_skeletons(p, 4)
    sk = res.skeletons[0]
    assert [s.name for s in sk.actions] == ["pick-place"]
    assert tuple(a.name for a in sk.actions[0].args[:3]) == ("body1", "region1", "region2")
    assert sk.horizon == 1


def test_unpack2_relocate_first_is_in_top_k():
    p = load_bundled("unpacking.dom", "unpack2.prob")
    res = top_k_skeletons(p, 8)
    found = False
    for sk in res.skeletons:
        acts = sk.actions
        if (len(acts) == 2 and acts[0].args[0].name == "body2"
                and acts[1].args[0].name == "body1"
                and acts[1].args[2].name == "region2"):
            found = True
    assert found


def test_layering_alternates_decisions_and_transitions():
    p = load_bundled("unpacking.dom", "unpack2.prob")
    sk = top_k_skeletons(p, 1).skeletons[0]
    layers = layerize(sk)
    kinds = [l.kind for l in layers]
    assert kinds == ["decision", "transition"]
    assert [s.name for s in layers[0].steps] == ["sample-pose"]
    assert [s.name for s in layers[1].steps] == ["plan-motion", "pick-place"]


def test_two_step_skeleton_layers_as_d1_t1_d2_t2():
    p = load_bundled("unpacking.dom", "unpack2.prob")
    res = top_k_skeletons(p, 8)
    two_step = next(s for s in res.skeletons if len(s.actions) == 2)
    kinds = [l.kind for l in layerize(two_step)]
    assert kinds == ["decision", "transition", "decision", "transition"]


def test_precedence_property_on_bundled_problems():
    cases = [("unpacking.dom", "unpack2.prob"), ("kitchen.dom", "kitchen2.prob"),
             ("hanoi.dom", "hanoi3.prob")]
    for d, f in cases:
        p = load_bundled(d, f)
        for sk in top_k_skeletons(p, 10).skeletons:
            assert tuple(sk.actions) == sk.source_plan.steps


def test_streams_precede_first_consumer():
    p = load_bundled("unpacking.dom", "unpack2.prob")
    for sk in top_k_skeletons(p, 8).skeletons:
        produced = set()
        for step in sk.steps:
            for a in step.args:
                if a.optimistic:
                    assert a in produced
            produced.update(step.outputs)


def test_signature_renames_placeholders_positionally():
    p = load_bundled("unpacking.dom", "unpack2.prob")
    res = top_k_skeletons(p, 8)
    sigs = [sk.signature() for sk in res.skeletons]
    assert len(set(sigs)) == len(sigs)  # distinct plans, distinct signatures
    flat = str(sigs)
    assert "#" not in flat and "_v0" in flat


def test_malformed_skeleton_detected():
    p = load_bundled("unpacking.dom", "unpack2.prob")
    sk = top_k_skeletons(p, 1).skeletons[0]
    # drop the producing stream: the consumer now references an unproduced
    # placeholder
    broken = Skeleton(0, tuple(sk.steps[1:]), sk.source_plan)
    with pytest.raises(MalformedSkeletonError):
        layerize(broken)


def test_partial_result_when_fewer_plans_exist():
    p = load_bundled("kitchen.dom", "kitchen2.prob")
    res = top_k_skeletons(p, 50)
    assert res.partial and len(res.skeletons) == 6


def test_horizon_counts_decision_streams_only():
    p = load_bundled("kitchen.dom", "kitchen2.prob")
    sk = top_k_skeletons(p, 1).skeletons[0]
    # two bodies, each needing a sink pose and a stove pose
    assert sk.horizon == 4
    assert sum(1 for s in sk.steps if s.is_stream and not s.schema.decision) == 4
