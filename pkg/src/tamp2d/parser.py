"""S-expression reader for the ``.dom`` / ``.prob`` formats, plus the
canonical ``.trace.json`` emitter.

The grammar is documented in ``docs/format.md``.  Keywords are matched
case-insensitively; object, predicate, and schema names are case-sensitive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .model import (
    ActionSchema,
    Literal,
    ModelError,
    Obj,
    Param,
    PlanTrace,
    Problem,
    State,
    StreamSchema,
    UNIVERSAL_TYPE,
)


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int = 1


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: str  # "error" | "warning"
    message: str
    span: SourceSpan

    def __str__(self):
        return f"{self.span.file}:{self.span.line}:{self.span.column}: {self.severity}: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass
class SExpr:
    """Either an atom (``value`` is str/float) or a list of SExpr."""

    value: object
    span: SourceSpan
    items: list["SExpr"] | None = None

    @property
    def is_list(self) -> bool:
        return self.items is not None


def _err(message: str, span: SourceSpan) -> ParseError:
    return ParseError([ParseDiagnostic("error", message, span)])


def tokenize(text: str, filename: str = "<string>"):
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield c, SourceSpan(filename, line, col)
            col += 1
            i += 1
        else:
            start, scol = i, col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            yield text[start:i], SourceSpan(filename, line, scol, i - start)
    yield None, SourceSpan(filename, line, col)


def read_sexpr(text: str, filename: str = "<string>") -> list[SExpr]:
    """Parse the full input into a list of top-level s-expressions."""
    stack: list[SExpr] = []
    top: list[SExpr] = []
    for tok, span in tokenize(text, filename):
        if tok is None:
            if stack:
                raise _err("unbalanced '(': input ends inside a form", stack[-1].span)
            return top
        if tok == "(":
            node = SExpr(None, span, items=[])
            (stack[-1].items if stack else top).append(node)
            stack.append(node)
        elif tok == ")":
            if not stack:
                raise _err("unmatched ')'", span)
            stack.pop()
        else:
            try:
                value: object = float(tok)
            except ValueError:
                value = tok
            node = SExpr(value, span)
            (stack[-1].items if stack else top).append(node)
    return top


def _atom(e: SExpr, what: str) -> str:
    if e.is_list or not isinstance(e.value, str):
        raise _err(f"expected {what}", e.span)
    return e.value


def _keyword_is(e: SExpr, kw: str) -> bool:
    return not e.is_list and isinstance(e.value, str) and e.value.lower() == kw


def _parse_typed_list(items: list[SExpr]) -> list[Param]:
    """``(?a ?b - sometype ?c)`` -> params; untyped names get the universal type."""
    out: list[Param] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        tok = _atom(items[i], "a name or '-'")
        if tok == "-":
            if i + 1 >= len(items):
                raise _err("dangling '-' in typed list", items[i].span)
            ty = _atom(items[i + 1], "a type name")
            out.extend(Param(p, ty) for p in pending)
            pending = []
            i += 2
        else:
            pending.append(tok)
            i += 1
    out.extend(Param(p, UNIVERSAL_TYPE) for p in pending)
    return out


def _parse_literal(e: SExpr, predicates: dict[str, int] | None, span_ok=True) -> Literal:
    if not e.is_list or not e.items:
        raise _err("expected a literal form", e.span)
    head = _atom(e.items[0], "a predicate name")
    if head.lower() == "not":
        if len(e.items) != 2:
            raise _err("(not ...) takes exactly one literal", e.span)
        inner = _parse_literal(e.items[1], predicates)
        return inner.negate()
    args = tuple(_atom(a, "an argument") for a in e.items[1:])
    if predicates is not None and head != "=":
        if head not in predicates:
            raise _err(f"unknown predicate {head!r}", e.span)
        if predicates[head] != len(args):
            raise _err(
                f"predicate {head!r} expects {predicates[head]} args, got {len(args)}",
                e.span,
            )
    return Literal(head, args)


def _parse_conjunction(e: SExpr, predicates) -> list[Literal]:
    if e.is_list and e.items and _keyword_is(e.items[0], "and"):
        return [_parse_literal(x, predicates) for x in e.items[1:]]
    return [_parse_literal(e, predicates)]


def _fields(items: list[SExpr]) -> dict[str, SExpr | bool]:
    """Split ``:key value`` pairs; bare trailing keywords map to True."""
    out: dict[str, SExpr | bool] = {}
    i = 0
    while i < len(items):
        key = _atom(items[i], "a :keyword").lower()
        if not key.startswith(":"):
            raise _err(f"expected a :keyword, got {key!r}", items[i].span)
        if i + 1 < len(items) and not (
            not items[i + 1].is_list
            and isinstance(items[i + 1].value, str)
            and items[i + 1].value.startswith(":")
        ):
            if key in out:
                raise _err(f"duplicate field {key}", items[i].span)
            out[key] = items[i + 1]
            i += 2
        else:
            out[key] = True
            i += 1
    return out


@dataclass
class Domain:
    name: str
    predicates: dict[str, int]
    actions: tuple[ActionSchema, ...]
    streams: tuple[StreamSchema, ...]


def parse_domain(text: str, filename: str = "<string>") -> Domain:
    forms = read_sexpr(text, filename)
    if len(forms) != 1 or not forms[0].is_list:
        raise _err("expected a single (define (domain ...) ...) form", SourceSpan(filename, 1, 1))
    top = forms[0]
    if not top.items or not _keyword_is(top.items[0], "define"):
        raise _err("expected (define ...)", top.span)
    head = top.items[1]
    if not head.is_list or len(head.items) != 2 or not _keyword_is(head.items[0], "domain"):
        raise _err("expected (domain <name>)", head.span)
    name = _atom(head.items[1], "a domain name")

    predicates: dict[str, int] = {}
    actions: list[ActionSchema] = []
    streams: list[StreamSchema] = []
    seen_names: set[str] = set()

    for form in top.items[2:]:
        if not form.is_list or not form.items:
            raise _err("expected a (:predicates ...), (:action ...) or (:stream ...) form", form.span)
        kind = _atom(form.items[0], "a section keyword").lower()
        if kind == ":predicates":
            for p in form.items[1:]:
                if not p.is_list or not p.items:
                    raise _err("expected (name ?arg ...)", p.span)
                pname = _atom(p.items[0], "a predicate name")
                if pname in predicates:
                    raise _err(f"duplicate predicate {pname!r}", p.span)
                predicates[pname] = len(p.items) - 1
        elif kind == ":action":
            aname = _atom(form.items[1], "an action name")
            if aname in seen_names:
                raise _err(f"duplicate schema name {aname!r}", form.span)
            seen_names.add(aname)
            f = _fields(form.items[2:])
            for req in (":parameters", ":effect"):
                if req not in f:
                    raise _err(f"action {aname!r} is missing {req}", form.span)
            params = _parse_typed_list(f[":parameters"].items or [])
            pre = _parse_conjunction(f[":precondition"], predicates) if ":precondition" in f else []
            adds, dels = [], []
            for e in _parse_conjunction(f[":effect"], predicates):
                (adds if e.positive else dels).append(e.negate() if not e.positive else e)
            cost = 1.0
            if ":cost" in f:
                cost = float(f[":cost"].value)
            try:
                actions.append(
                    ActionSchema(aname, tuple(params), tuple(pre), tuple(adds), tuple(dels), cost)
                )
            except ModelError as exc:
                raise _err(str(exc), form.span)
        elif kind == ":stream":
            sname = _atom(form.items[1], "a stream name")
            if sname in seen_names:
                raise _err(f"duplicate schema name {sname!r}", form.span)
            seen_names.add(sname)
            f = _fields(form.items[2:])
            for req in (":inputs", ":outputs", ":certified"):
                if req not in f:
                    raise _err(f"stream {sname!r} is missing {req}", form.span)
            ins = _parse_typed_list(f[":inputs"].items or [])
            outs = _parse_typed_list(f[":outputs"].items or [])
            pre = _parse_conjunction(f[":precondition"], predicates) if ":precondition" in f else []
            cert = _parse_conjunction(f[":certified"], predicates)
            try:
                streams.append(
                    StreamSchema(
                        sname,
                        tuple(ins),
                        tuple(outs),
                        tuple(pre),
                        tuple(cert),
                        decision=bool(f.get(":decision", False)),
                    )
                )
            except ModelError as exc:
                raise _err(str(exc), form.span)
        else:
            raise _err(f"unknown domain section {kind!r}", form.span)

    return Domain(name, predicates, tuple(actions), tuple(streams))


def _sexpr_to_plain(e: SExpr):
    if e.is_list:
        return tuple(_sexpr_to_plain(x) for x in e.items)
    return e.value


def parse_problem(text: str, domain: Domain, filename: str = "<string>") -> Problem:
    forms = read_sexpr(text, filename)
    if len(forms) != 1 or not forms[0].is_list:
        raise _err("expected a single (define (problem ...) ...) form", SourceSpan(filename, 1, 1))
    top = forms[0]
    if not top.items or not _keyword_is(top.items[0], "define"):
        raise _err("expected (define ...)", top.span)
    head = top.items[1]
    if not head.is_list or len(head.items) != 2 or not _keyword_is(head.items[0], "problem"):
        raise _err("expected (problem <name>)", head.span)
    name = _atom(head.items[1], "a problem name")

    objects: dict[str, Obj] = {}
    init: list[Literal] = []
    goal: list[Literal] = []
    backend = ""
    geometry: tuple = ()

    def resolve(l: Literal, span: SourceSpan) -> Literal:
        args = []
        for a in l.args:
            if a not in objects:
                raise _err(f"object {a!r} is not declared", span)
            args.append(objects[a])
        return Literal(l.predicate, tuple(args), l.positive)

    for form in top.items[2:]:
        if not form.is_list or not form.items:
            raise _err("expected a problem section", form.span)
        kind = _atom(form.items[0], "a section keyword").lower()
        if kind == ":domain":
            dname = _atom(form.items[1], "a domain name")
            if dname != domain.name:
                raise _err(f"problem requires domain {dname!r}, got {domain.name!r}", form.span)
        elif kind == ":objects":
            for p in _parse_typed_list(form.items[1:]):
                if p.name in objects:
                    raise _err(f"duplicate object {p.name!r}", form.span)
                objects[p.name] = Obj(p.name, p.type)
        elif kind == ":init":
            for e in form.items[1:]:
                l = _parse_literal(e, domain.predicates)
                if not l.positive:
                    raise _err("negative literals are not allowed in :init", e.span)
                init.append(resolve(l, e.span))
        elif kind == ":goal":
            for e in form.items[1:2]:
                for l in _parse_conjunction(e, domain.predicates):
                    goal.append(resolve(l, e.span))
        elif kind == ":backend":
            backend = _atom(form.items[1], "a backend name")
        elif kind == ":geometry":
            geometry = tuple(_sexpr_to_plain(x) for x in form.items[1:])
        else:
            raise _err(f"unknown problem section {kind!r}", form.span)

    return Problem(
        name=name,
        objects=frozenset(objects.values()),
        init=State(frozenset(init)),
        goal=frozenset(goal),
        actions=domain.actions,
        streams=domain.streams,
        domain_backend=backend,
        geometry=geometry,
        domain_name=domain.name,
    )


# --- trace serialization -----------------------------------------------------

class TraceSerializationError(Exception):
    pass


def _round6(x):
    if isinstance(x, float):
        r = round(x, 6)
        return int(r) if r.is_integer() else r
    if isinstance(x, (list, tuple)):
        return [_round6(v) for v in x]
    return x


def emit_plan_trace(trace: PlanTrace) -> str:
    """Canonical JSON for a fully bound trace: byte-stable for identical
    traces, numbers rounded to 6 decimal places."""
    steps = []
    for s in trace.steps:
        for a in s.args:
            if a.startswith("#") and a not in s.values:
                raise TraceSerializationError(f"unbound optimistic object {a!r} in trace")
        steps.append(
            {
                "name": s.name,
                "args": list(s.args),
                "values": {k: _round6(v) for k, v in sorted(s.values.items())},
                "motionCost": _round6(float(s.motion_cost)),
            }
        )
    doc = {
        "steps": steps,
        "motionCost": _round6(float(trace.motion_cost)),
        "reward": None if trace.reward is None else _round6(float(trace.reward)),
    }
    return json.dumps(doc, separators=(",", ":"))


# --- pretty printing (round-trip support) ------------------------------------

def _fmt_literal(l: Literal) -> str:
    inner = "(" + " ".join([l.predicate] + [a if isinstance(a, str) else a.name for a in l.args]) + ")"
    return inner if l.positive else f"(not {inner})"


def _fmt_params(params) -> str:
    return "(" + " ".join(
        p.name if p.type == UNIVERSAL_TYPE else f"{p.name} - {p.type}" for p in params
    ) + ")"


def format_domain(domain: Domain) -> str:
    """Pretty-print a parsed domain; reparsing yields a structurally
    identical model."""
    lines = [f"(define (domain {domain.name})"]
    preds = " ".join(
        "(" + " ".join([n] + [f"?a{i}" for i in range(k)]) + ")"
        for n, k in sorted(domain.predicates.items())
    )
    lines.append(f"  (:predicates {preds})")
    for a in domain.actions:
        lines.append(f"  (:action {a.name}")
        lines.append(f"    :parameters {_fmt_params(a.parameters)}")
        if a.preconditions:
            lines.append("    :precondition (and " + " ".join(map(_fmt_literal, a.preconditions)) + ")")
        effs = [_fmt_literal(e) for e in a.add_effects]
        effs += [_fmt_literal(e.negate()) for e in a.del_effects]
        lines.append("    :effect (and " + " ".join(effs) + ")")
        if a.cost != 1.0:
            lines.append(f"    :cost {a.cost}")
        lines[-1] += ")"
    for s in domain.streams:
        lines.append(f"  (:stream {s.name}")
        if s.decision:
            lines.append("    :decision")
        lines.append(f"    :inputs {_fmt_params(s.inputs)}")
        lines.append(f"    :outputs {_fmt_params(s.outputs)}")
        if s.preconditions:
            lines.append("    :precondition (and " + " ".join(map(_fmt_literal, s.preconditions)) + ")")
        lines.append("    :certified (and " + " ".join(map(_fmt_literal, s.certified)) + "))")
    lines.append(")")
    return "\n".join(lines)
