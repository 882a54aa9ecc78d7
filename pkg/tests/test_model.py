import pytest

from tamp2d.model import (
    ActionSchema,
    GroundOperator,
    Literal,
    ModelError,
    Obj,
    Param,
    PreconditionError,
    State,
    StreamSchema,
    applicable,
    apply,
    ground_all,
    lit,
)

A, B = Obj("a"), Obj("b")


def move_schema():
    return ActionSchema(
        name="move",
        parameters=(Param("?x"), Param("?r1"), Param("?r2")),
        preconditions=(lit("at", "?x", "?r1"),),
        add_effects=(lit("at", "?x", "?r2"),),
        del_effects=(lit("at", "?x", "?r1"),),
    )


def test_closed_world_negation():
    s = State(frozenset({lit("p", A)}))
    assert s.holds(lit("p", A))
    assert not s.holds(lit("p", B))
    assert s.holds(lit("p", B).negate())


def test_builtin_equality():
    s = State(frozenset())
    assert s.holds(lit("=", A, A))
    assert not s.holds(lit("=", A, B))
    assert s.holds(lit("=", A, B).negate())


def test_apply_and_applicable():
    r1, r2 = Obj("r1"), Obj("r2")
    op = GroundOperator(move_schema(), (A, r1, r2))
    s = State(frozenset({lit("at", A, r1)}))
    assert applicable(s, op)
    s2 = apply(s, op)
    assert s2.holds(lit("at", A, r2)) and not s2.holds(lit("at", A, r1))
    with pytest.raises(PreconditionError):
        apply(s2, op)


def test_ground_all_sorted_and_typed():
    ops = ground_all([move_schema()], [A, B, Obj("r1"), Obj("r2")])
    keys = [o.sort_key for o in ops]
    assert keys == sorted(keys)
    # equality preconditions that are statically false are pruned
    schema = ActionSchema(
        name="swap",
        parameters=(Param("?x"), Param("?y")),
        preconditions=(lit("=", "?x", "?y"),),
        add_effects=(lit("p", "?x"),),
        del_effects=(),
    )
    ops = ground_all([schema], [A, B])
    assert all(o.args[0] == o.args[1] for o in ops)


def test_optimistic_object_requires_origin():
    with pytest.raises(ModelError):
        Obj("#s1", optimistic=True)
    o = Obj("#s1", optimistic=True, origin=("sample-pose:a,b", 0))
    assert o.optimistic


def test_stream_certified_must_mention_output():
    with pytest.raises(ModelError):
        StreamSchema(
            name="bad",
            inputs=(Param("?x"),),
            outputs=(Param("?p"),),
            preconditions=(),
            certified=(lit("pose", "?x"),),
        )


def test_stream_operator_has_zero_cost():
    schema = StreamSchema(
        name="gen",
        inputs=(Param("?x"),),
        outputs=(Param("?p"),),
        preconditions=(),
        certified=(lit("pose", "?x", "?p"),),
    )
    out = Obj("#p1", optimistic=True, origin=("gen:a", 0))
    op = GroundOperator(schema, (A,), (out,))
    assert op.is_stream and op.cost == 0.0
    assert op.add_effects == (lit("pose", A, out),)


def test_negative_action_cost_rejected():
    with pytest.raises(ModelError):
        ActionSchema("bad", (), (), (lit("p", A),), (), cost=-1.0)
