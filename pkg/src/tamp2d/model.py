"""Relational planning model: objects, literals, states, schemas, ground operators.

All types here are immutable values; they can be shared freely across
concurrent searches.  Negative preconditions use closed-world semantics:
a negative literal holds iff its positive form is absent from the state.
The predicate ``=`` is built in and evaluated structurally.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Union

UNIVERSAL_TYPE = "object"
EQUALITY = "="


class ModelError(Exception):
    """Malformed schema, operator, or problem."""


class PreconditionError(ModelError):
    """apply() called with an operator that is not applicable."""


@dataclass(frozen=True, order=True)
class Obj:
    """A planning object.  Optimistic objects are stream outputs awaiting
    a concrete binding; their ``origin`` names the stream instance and
    output slot that created them."""

    name: str
    type: str = UNIVERSAL_TYPE
    optimistic: bool = False
    origin: tuple[str, int] | None = None

    def __post_init__(self):
        if self.optimistic and self.origin is None:
            raise ModelError(f"optimistic object {self.name!r} lacks an origin")
        if not self.optimistic and self.origin is not None:
            raise ModelError(f"concrete object {self.name!r} must not carry an origin")

    def __repr__(self):
        return self.name


# In schema templates, literal arguments may be variables (strings starting
# with '?') or constant Obj values.  Ground literals carry only Obj args.
Arg = Union[str, Obj]


@dataclass(frozen=True, order=True)
class Literal:
    predicate: str
    args: tuple[Arg, ...]
    positive: bool = True

    def negate(self) -> "Literal":
        return Literal(self.predicate, self.args, not self.positive)

    def substitute(self, binding: dict[str, Obj]) -> "Literal":
        return Literal(
            self.predicate,
            tuple(binding[a] if isinstance(a, str) else a for a in self.args),
            self.positive,
        )

    def __repr__(self):
        inner = " ".join([self.predicate] + [str(a) for a in self.args])
        return f"({inner})" if self.positive else f"(not ({inner}))"


def lit(predicate: str, *args: Arg) -> Literal:
    return Literal(predicate, tuple(args))


@dataclass(frozen=True)
class State:
    """A set of positive ground literals under the closed-world assumption."""

    literals: frozenset[Literal] = frozenset()

    def holds(self, literal: Literal) -> bool:
        if literal.predicate == EQUALITY:
            eq = literal.args[0] == literal.args[1]
            return eq if literal.positive else not eq
        if literal.positive:
            return literal in self.literals
        return literal.negate() not in self.literals

    def entails(self, literals: Iterable[Literal]) -> bool:
        return all(self.holds(l) for l in literals)

    def __contains__(self, literal: Literal) -> bool:
        return literal in self.literals

    def __len__(self):
        return len(self.literals)


@dataclass(frozen=True)
class Param:
    name: str
    type: str = UNIVERSAL_TYPE


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple[Param, ...]
    preconditions: tuple[Literal, ...]
    add_effects: tuple[Literal, ...]
    del_effects: tuple[Literal, ...]
    cost: float = 1.0

    def __post_init__(self):
        if self.cost < 0:
            raise ModelError(f"action {self.name!r} has negative cost")
        declared = {p.name for p in self.parameters}
        for eff in self.add_effects + self.del_effects:
            for a in eff.args:
                if isinstance(a, str) and a not in declared:
                    raise ModelError(
                        f"action {self.name!r}: effect variable {a} not in parameters"
                    )


@dataclass(frozen=True)
class StreamSchema:
    name: str
    inputs: tuple[Param, ...]
    outputs: tuple[Param, ...]
    preconditions: tuple[Literal, ...]
    certified: tuple[Literal, ...]
    decision: bool = False

    def __post_init__(self):
        if not self.outputs:
            raise ModelError(f"stream {self.name!r} must declare at least one output")
        in_names = {p.name for p in self.inputs}
        out_names = {p.name for p in self.outputs}
        if in_names & out_names:
            raise ModelError(f"stream {self.name!r}: outputs overlap inputs")
        for c in self.certified:
            if not any(isinstance(a, str) and a in out_names for a in c.args):
                raise ModelError(
                    f"stream {self.name!r}: certified literal {c} mentions no output"
                )


Schema = Union[ActionSchema, StreamSchema]


class GroundOperator:
    """A schema instantiated with concrete argument objects.  Stream
    operators additionally carry their (optimistic) output objects."""

    __slots__ = (
        "schema",
        "args",
        "outputs",
        "preconditions",
        "add_effects",
        "del_effects",
        "_key",
        "_hash",
    )

    def __init__(self, schema: Schema, args: tuple[Obj, ...], outputs: tuple[Obj, ...] = ()):
        if isinstance(schema, ActionSchema):
            if len(args) != len(schema.parameters):
                raise ModelError(f"arity mismatch grounding action {schema.name!r}")
            if outputs:
                raise ModelError(f"action {schema.name!r} cannot have outputs")
            binding = {p.name: a for p, a in zip(schema.parameters, args)}
            adds = tuple(e.substitute(binding) for e in schema.add_effects)
            dels = tuple(e.substitute(binding) for e in schema.del_effects)
        else:
            if len(args) != len(schema.inputs) or len(outputs) != len(schema.outputs):
                raise ModelError(f"arity mismatch grounding stream {schema.name!r}")
            binding = {p.name: a for p, a in zip(schema.inputs, args)}
            binding.update({p.name: o for p, o in zip(schema.outputs, outputs)})
            adds = tuple(c.substitute(binding) for c in schema.certified)
            dels = ()
        self.schema = schema
        self.args = args
        self.outputs = outputs
        self.preconditions = tuple(p.substitute(binding) for p in schema.preconditions)
        self.add_effects = adds
        self.del_effects = dels
        self._key = (schema.name, tuple(a.name for a in args), tuple(o.name for o in outputs))
        self._hash = hash(self._key)

    @property
    def name(self) -> str:
        return self.schema.name

    @property
    def is_stream(self) -> bool:
        return isinstance(self.schema, StreamSchema)

    @property
    def cost(self) -> float:
        # Streams are free: skeleton cost is the cost of its actions.
        return 0.0 if self.is_stream else self.schema.cost

    @property
    def sort_key(self):
        return self._key

    def __eq__(self, other):
        return isinstance(other, GroundOperator) and self._key == other._key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        parts = " ".join(a.name for a in self.args)
        s = f"({self.name} {parts})" if parts else f"({self.name})"
        if self.outputs:
            s += " -> " + " ".join(o.name for o in self.outputs)
        return s


@dataclass(frozen=True)
class Problem:
    name: str
    objects: frozenset[Obj]
    init: State
    goal: frozenset[Literal]
    actions: tuple[ActionSchema, ...]
    streams: tuple[StreamSchema, ...]
    domain_backend: str = ""
    # Opaque geometric annotations, interpreted only by the backend.
    geometry: tuple = ()
    domain_name: str = ""

    def action(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def stream(self, name: str) -> StreamSchema:
        for s in self.streams:
            if s.name == name:
                return s
        raise KeyError(name)


def applicable(state: State, op: GroundOperator) -> bool:
    """True iff all positive preconditions are in the state and no negative
    precondition's positive form is."""
    return state.entails(op.preconditions)


def apply(state: State, op: GroundOperator) -> State:
    """Apply a ground operator, returning a fresh state.  Streams only add
    their certified literals; actions delete then add."""
    if not applicable(state, op):
        raise PreconditionError(f"{op!r} is not applicable")
    if op.is_stream:
        return State(state.literals | frozenset(op.add_effects))
    return State((state.literals - frozenset(op.del_effects)) | frozenset(op.add_effects))


def _type_candidates(objects: Iterable[Obj]) -> dict[str, list[Obj]]:
    by_type: dict[str, list[Obj]] = {}
    for o in sorted(objects):
        by_type.setdefault(o.type, []).append(o)
    return by_type


def _statically_false(op: GroundOperator) -> bool:
    for p in op.preconditions:
        if p.predicate == EQUALITY:
            eq = p.args[0] == p.args[1]
            if eq != p.positive:
                return True
    return False


def ground_all(actions: Iterable[ActionSchema], objects: Iterable[Obj]) -> list[GroundOperator]:
    """Every type-consistent instantiation of every action schema, minus
    those whose built-in equality preconditions are statically false.
    Output order is deterministic: lexicographic by name, then args."""
    by_type = _type_candidates(objects)
    universal = sorted(objects)
    out = []
    for schema in sorted(actions, key=lambda a: a.name):
        pools = []
        for p in schema.parameters:
            pools.append(universal if p.type == UNIVERSAL_TYPE else by_type.get(p.type, []))
        for combo in itertools.product(*pools):
            op = GroundOperator(schema, tuple(combo))
            if not _statically_false(op):
                out.append(op)
    out.sort(key=lambda o: o.sort_key)
    return out


def match_templates(
    templates: tuple[Literal, ...],
    index: dict[str, list[Literal]],
    binding: dict[str, Obj],
) -> Iterable[dict[str, Obj]]:
    """Backtracking unification of positive, non-equality templates against
    an indexed literal set.  Negative and equality templates are checked
    once fully bound, otherwise deferred (callers re-check on the final
    binding)."""
    positives = [t for t in templates if t.positive and t.predicate != EQUALITY]
    rest = [t for t in templates if not (t.positive and t.predicate != EQUALITY)]

    def check_rest(b: dict[str, Obj]) -> bool:
        for t in rest:
            args = [b.get(a, a) if isinstance(a, str) else a for a in t.args]
            if any(isinstance(a, str) for a in args):
                continue  # still unbound; callers re-check on the full grounding
            if t.predicate == EQUALITY:
                if (args[0] == args[1]) != t.positive:
                    return False
            else:
                ground = Literal(t.predicate, tuple(args), True)
                if (ground in index.get(t.predicate, _EMPTY_SET)) == t.positive:
                    continue
                return False
        return True

    def backtrack(i: int, b: dict[str, Obj]):
        if i == len(positives):
            if check_rest(b):
                yield dict(b)
            return
        t = positives[i]
        for cand in index.get(t.predicate, ()):
            if len(cand.args) != len(t.args):
                continue
            new = {}
            ok = True
            for ta, ca in zip(t.args, cand.args):
                if isinstance(ta, str):
                    bound = b.get(ta, new.get(ta))
                    if bound is None:
                        new[ta] = ca
                    elif bound != ca:
                        ok = False
                        break
                elif ta != ca:
                    ok = False
                    break
            if not ok:
                continue
            b.update(new)
            yield from backtrack(i + 1, b)
            for kk in new:
                del b[kk]

    yield from backtrack(0, dict(binding))


_EMPTY_SET: frozenset = frozenset()


def _index_literals(literals: Iterable[Literal]) -> dict[str, list[Literal]]:
    idx: dict[str, list[Literal]] = {}
    for l in sorted(literals):
        idx.setdefault(l.predicate, []).append(l)
    return idx


def ground_reachable(
    actions: Iterable[ActionSchema],
    objects: Iterable[Obj],
    init: State,
) -> tuple[list[GroundOperator], frozenset[Literal]]:
    """Delete-relaxed reachability grounding: the returned operators are
    exactly those whose positive preconditions are reachable ignoring
    deletes.  Sound for search over the real (non-relaxed) semantics,
    and far smaller than ``ground_all`` when operators are constrained
    by static literals.  Also returns the relaxed reachable literal set,
    usable as an unsolvability check.  Deterministic output order."""
    by_type = _type_candidates(objects)
    universal = sorted(objects)
    relaxed = set(init.literals)
    found: set[GroundOperator] = set()
    schemas = sorted(actions, key=lambda a: a.name)
    while True:
        idx = _index_literals(relaxed)
        # In the relaxation, negative preconditions are treated as satisfiable.
        new_ops = []
        for schema in schemas:
            templates = tuple(
                p for p in schema.preconditions if p.positive or p.predicate == EQUALITY
            )
            for binding in match_templates(templates, idx, {}):
                # Fill parameters unconstrained by any precondition.
                free = [p for p in schema.parameters if p.name not in binding]
                pools = [
                    universal if p.type == UNIVERSAL_TYPE else by_type.get(p.type, [])
                    for p in free
                ]
                for combo in itertools.product(*pools):
                    b = dict(binding)
                    b.update({p.name: o for p, o in zip(free, combo)})
                    try:
                        op = GroundOperator(
                            schema, tuple(b[p.name] for p in schema.parameters)
                        )
                    except KeyError:
                        continue
                    if _statically_false(op):
                        continue
                    if op not in found:
                        found.add(op)
                        new_ops.append(op)
        if not new_ops:
            break
        for op in new_ops:
            relaxed.update(op.add_effects)
    out = sorted(found, key=lambda o: o.sort_key)
    return out, frozenset(relaxed)


# --- bound plan traces -------------------------------------------------------

@dataclass
class TraceStep:
    """One executed operator with concrete values for its optimistic args."""

    name: str
    args: tuple[str, ...]
    values: dict[str, object]
    motion_cost: float = 0.0  # accumulated up to and including this step


@dataclass
class PlanTrace:
    steps: list[TraceStep] = field(default_factory=list)
    motion_cost: float = 0.0
    reward: float | None = None
    skeleton_rank: int | None = None
