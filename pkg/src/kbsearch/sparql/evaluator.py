"""Query evaluation over an immutable KnowledgeBase.

Bag-semantics nested-loop joins in load order; qualifier-scoped patterns bind
inside the statement matched by the nearest preceding main pattern. Filter
type mismatches are filter-false, never execution errors; only unknown
prefixes are execution errors (unknown ids match nothing).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union as TyUnion

from ..kb import KnowledgeBase, Literal, NUMERIC_KINDS, Statement
from .ast import Count, Filter, GroupPattern, Name, Query, TriplePattern, Var


class QueryExecutionError(Exception):
    """Raised for conditions the agent must fix, e.g. an unknown prefix."""


@dataclass(frozen=True)
class NodeVal:
    id: str
    label: str


@dataclass(frozen=True)
class PredVal:
    id: str
    label: str


Value = TyUnion[NodeVal, PredVal, Literal]


class _NoMatch:
    """Resolution of an undeclared id; matches nothing."""


_NOMATCH = _NoMatch()

NODE_PREFIXES = ("e", "c")
PREDICATE_PREFIXES = ("p", "pq")


def render_value(value: Optional[Value]) -> str:
    if value is None:
        return ""
    if isinstance(value, Literal):
        return value.lexical
    return f"{value.id} ({value.label})"


def _resolve_name(name: Name, kb: KnowledgeBase):
    if name.prefix in NODE_PREFIXES:
        if kb.has_node(name.local):
            return NodeVal(name.local, kb.node_label(name.local))
        return _NOMATCH
    if name.prefix in PREDICATE_PREFIXES:
        if kb.has_predicate(name.local):
            return PredVal(name.local, kb.predicates[name.local])
        return _NOMATCH
    raise QueryExecutionError(
        f"unknown prefix {name.prefix!r}: (expected one of e:, c:, p:, pq:)")


def _resolve_term(term: Term, kb: KnowledgeBase):
    """Var stays a Var; names become concrete values or the no-match sentinel."""
    if isinstance(term, Var):
        return term
    if isinstance(term, Name):
        return _resolve_name(term, kb)
    return term  # Literal


@dataclass
class _Row:
    bindings: dict[str, Value]
    last_stmt: Optional[Statement]


def _unify(term, value: Value, bindings: dict[str, Value]) -> Optional[dict[str, Value]]:
    """Extend bindings so `term` equals `value`, or None if impossible.

    Returns the same dict when no new binding is needed (caller copies on write).
    """
    if isinstance(term, Var):
        bound = bindings.get(term.name)
        if bound is None:
            new = dict(bindings)
            new[term.name] = value
            return new
        return bindings if bound == value else None
    if isinstance(term, _NoMatch):
        return None
    return bindings if term == value else None


def _object_value(obj, kb: KnowledgeBase) -> Value:
    if isinstance(obj, Literal):
        return obj
    return NodeVal(obj, kb.node_label(obj))


def _match_main(pattern: TriplePattern, kb: KnowledgeBase, rows: list[_Row]) -> list[_Row]:
    s_t = _resolve_term(pattern.subject, kb)
    p_t = _resolve_term(pattern.predicate, kb)
    o_t = _resolve_term(pattern.object, kb)
    out: list[_Row] = []
    for row in rows:
        # Narrow the candidate statements through the subject/predicate maps.
        subject_id = None
        if isinstance(s_t, NodeVal):
            subject_id = s_t.id
        elif isinstance(s_t, Var) and isinstance(row.bindings.get(s_t.name), NodeVal):
            subject_id = row.bindings[s_t.name].id
        predicate_id = None
        if isinstance(p_t, PredVal):
            predicate_id = p_t.id
        elif isinstance(p_t, Var) and isinstance(row.bindings.get(p_t.name), PredVal):
            predicate_id = row.bindings[p_t.name].id
        if subject_id is not None:
            candidates = [kb.statements[i] for i in kb._by_subject.get(subject_id, ())]
        elif predicate_id is not None:
            candidates = [kb.statements[i] for i in kb._by_predicate.get(predicate_id, ())]
        else:
            candidates = kb.statements
        for st in candidates:
            b = _unify(s_t, NodeVal(st.subject, kb.node_label(st.subject)), row.bindings)
            if b is None:
                continue
            b = _unify(p_t, PredVal(st.predicate, kb.predicates[st.predicate]), b)
            if b is None:
                continue
            b = _unify(o_t, _object_value(st.object, kb), b)
            if b is None:
                continue
            out.append(_Row(b, st))
    return out


def _match_qualifier(pattern: TriplePattern, kb: KnowledgeBase, rows: list[_Row]) -> list[_Row]:
    s_t = _resolve_term(pattern.subject, kb)
    p_t = _resolve_term(pattern.predicate, kb)
    o_t = _resolve_term(pattern.object, kb)
    out: list[_Row] = []
    for row in rows:
        st = row.last_stmt
        if st is None:
            continue
        b0 = _unify(s_t, NodeVal(st.subject, kb.node_label(st.subject)), row.bindings)
        if b0 is None:
            continue
        for qp, qv in st.qualifiers:
            b = _unify(p_t, PredVal(qp, kb.predicates[qp]), b0)
            if b is None:
                continue
            b = _unify(o_t, _object_value(qv, kb), b)
            if b is None:
                continue
            out.append(_Row(b, st))
    return out


def compare_values(left: Optional[Value], right: Optional[Value], op: str) -> bool:
    """Comparison semantics for FILTER; incomparable operands are always False."""
    if left is None or right is None:
        return False
    if isinstance(left, Literal) and isinstance(right, Literal):
        if left.kind in NUMERIC_KINDS and right.kind in NUMERIC_KINDS:
            a, b = left.numeric, right.numeric
        elif left.kind == "date" and right.kind == "date":
            a, b = left.date_key(), right.date_key()
        elif left.kind == "string" and right.kind == "string":
            a, b = left.lexical, right.lexical
        else:
            return False
    elif type(left) is type(right):  # NodeVal/NodeVal or PredVal/PredVal
        a, b = left.id, right.id
    else:
        return False
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    if op == "<=":
        return a <= b
    return a >= b


def _filter_holds(flt: Filter, kb: KnowledgeBase, row: _Row) -> bool:
    def operand(term):
        resolved = _resolve_term(term, kb)
        if isinstance(resolved, Var):
            return row.bindings.get(resolved.name)
        if isinstance(resolved, _NoMatch):
            return None
        return resolved

    return compare_values(operand(flt.left), operand(flt.right), flt.op)


def _eval_group(group: GroupPattern, kb: KnowledgeBase, rows: list[_Row]) -> list[_Row]:
    for el in group.elements:
        if isinstance(el, TriplePattern):
            if el.qualifier:
                rows = _match_qualifier(el, kb, rows)
            else:
                rows = _match_main(el, kb, rows)
        elif isinstance(el, Filter):
            rows = [r for r in rows if _filter_holds(el, kb, r)]
        else:  # Union
            rows = _eval_group(el.left, kb, rows) + _eval_group(el.right, kb, rows)
        if not rows:
            return []
    return rows


def sort_key(value: Optional[Value]) -> tuple:
    """Total order over result values: kind group first, then the kind's
    native order (calendar for dates, numeric for numbers, lexical otherwise)."""
    if value is None:
        return ("",)
    if isinstance(value, NodeVal):
        return ("node", value.id)
    if isinstance(value, PredVal):
        return ("pred", value.id)
    if value.kind == "date":
        return ("date", value.date_key())
    if value.kind in NUMERIC_KINDS:
        return (value.kind, value.numeric)
    return ("string", value.lexical)


@dataclass
class ResultSet:
    variables: tuple[str, ...]
    rows: tuple[tuple[Optional[Value], ...], ...]
    form: str = "SELECT"
    ask: Optional[bool] = None

    @property
    def canonical(self) -> frozenset[tuple[str, ...]]:
        """Order- and duplicate-insensitive fingerprint of the solution set."""
        if self.form == "ASK":
            return frozenset({("true" if self.ask else "false",)})
        return frozenset(tuple(render_value(v) for v in row) for row in self.rows)


def evaluate(query: Query, kb: KnowledgeBase) -> ResultSet:
    rows = _eval_group(query.body, kb, [_Row({}, None)])

    if query.form == "ASK":
        return ResultSet((), (), form="ASK", ask=bool(rows))

    if isinstance(query.projection, Count):
        values = [row.bindings.get(query.projection.var.name) for row in rows]
        values = [v for v in values if v is not None]
        if query.distinct:
            seen = set()
            deduped = []
            for v in values:
                if v not in seen:
                    seen.add(v)
                    deduped.append(v)
            values = deduped
        count = Literal.of("integer", str(len(values)))
        return ResultSet((query.projection.alias.name,), ((count,),))

    if query.order is not None:
        # Order before projection: the sort variable need not be projected.
        var, desc = query.order
        rows = sorted(rows, key=lambda row: sort_key(row.bindings.get(var.name)),
                      reverse=desc)
    names = tuple(v.name for v in query.projection)
    projected = [tuple(row.bindings.get(n) for n in names) for row in rows]
    if query.distinct:
        seen_rows: list[tuple] = []
        marker = set()
        for row in projected:
            if row not in marker:
                marker.add(row)
                seen_rows.append(row)
        projected = seen_rows
    if query.limit is not None:
        projected = projected[:query.limit]
    return ResultSet(names, tuple(projected))


def canonical_answers(rs: ResultSet) -> frozenset[str]:
    """Deduplicated projected values in canonical lexical form.

    Nodes render as "id (label)"; multi-variable rows join with a tab.
    """
    if rs.form == "ASK":
        return frozenset({"true" if rs.ask else "false"})
    out = set()
    for row in rs.rows:
        out.add("\t".join(render_value(v) for v in row))
    return frozenset(out)
