"""Level-wise optimistic enrichment: streams whose preconditions hold fire
once per unique input tuple, adding placeholder outputs and their certified
literals.  Purely symbolic; no concrete values are computed here."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .model import (
    UNIVERSAL_TYPE,
    GroundOperator,
    Literal,
    Obj,
    State,
    StreamSchema,
    _index_literals,
    applicable,
    match_templates,
)

DEFAULT_MAX_LEVEL = 4


@dataclass
class ExpansionResult:
    objects: frozenset[Obj]
    state: State
    instantiations: list[GroundOperator] = field(default_factory=list)
    level: int = 0

    def instance_for(self, obj: Obj) -> GroundOperator:
        """The stream instantiation that produced an optimistic object."""
        if not obj.optimistic:
            raise KeyError(f"{obj.name} is concrete")
        instance_id, _slot = obj.origin
        for op in self.instantiations:
            if _instance_id(op) == instance_id:
                return op
        raise KeyError(instance_id)


def _instance_id(op: GroundOperator) -> str:
    return op.name + ":" + ",".join(a.name for a in op.args)


def optimistic_expand(
    objects: frozenset[Obj],
    state: State,
    streams: tuple[StreamSchema, ...],
    level: int,
) -> ExpansionResult:
    """Perform exactly ``level`` enrichment rounds (stopping early on
    saturation).  Each round evaluates stream preconditions against the
    state as of the round start, so the result at level L is a prefix of
    the result at level L+1.  Placeholders are named ``#<initial><counter>``
    with a single counter across the whole expansion."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    cur_objects = set(objects)
    cur_literals = set(state.literals)
    fired: set[tuple[str, tuple[str, ...]]] = set()
    instantiations: list[GroundOperator] = []
    counter = 0
    rounds_done = 0

    for _round in range(level):
        snapshot = State(frozenset(cur_literals))
        idx = _index_literals(snapshot.literals)
        by_type: dict[str, list[Obj]] = {}
        for o in sorted(cur_objects):
            by_type.setdefault(o.type, []).append(o)
        universal = sorted(cur_objects)

        to_fire: list[tuple[StreamSchema, tuple[Obj, ...]]] = []
        for schema in sorted(streams, key=lambda s: s.name):
            seen_inputs: set[tuple[Obj, ...]] = set()
            for binding in match_templates(schema.preconditions, idx, {}):
                free = [p for p in schema.inputs if p.name not in binding]
                pools = [
                    universal if p.type == UNIVERSAL_TYPE else by_type.get(p.type, [])
                    for p in free
                ]
                for combo in itertools.product(*pools):
                    b = dict(binding)
                    b.update({p.name: o for p, o in zip(free, combo)})
                    args = tuple(b[p.name] for p in schema.inputs)
                    key = (schema.name, tuple(a.name for a in args))
                    if key in fired or args in seen_inputs:
                        continue
                    seen_inputs.add(args)
                    to_fire.append((schema, args))
            # deterministic input-tuple order within each schema
            to_fire[len(to_fire) - len(seen_inputs):] = sorted(
                to_fire[len(to_fire) - len(seen_inputs):],
                key=lambda sa: tuple(o.name for o in sa[1]),
            )

        fired_this_round = 0
        for schema, args in to_fire:
            instance_id = schema.name + ":" + ",".join(a.name for a in args)
            outputs = []
            for slot, p in enumerate(schema.outputs):
                counter += 1
                outputs.append(
                    Obj(
                        name=f"#{schema.name[0].lower()}{counter}",
                        type=p.type,
                        optimistic=True,
                        origin=(instance_id, slot),
                    )
                )
            op = GroundOperator(schema, args, tuple(outputs))
            # Re-check the full precondition set on the ground instance
            # (match_templates defers negated templates with free inputs).
            if not applicable(snapshot, op):
                counter -= len(outputs)
                continue
            fired.add((schema.name, tuple(a.name for a in args)))
            instantiations.append(op)
            cur_objects.update(outputs)
            cur_literals.update(op.add_effects)
            fired_this_round += 1
        rounds_done += 1
        if fired_this_round == 0:
            break

    return ExpansionResult(
        objects=frozenset(cur_objects),
        state=State(frozenset(cur_literals)),
        instantiations=instantiations,
        level=rounds_done,
    )
