"""AST for the query subset: SELECT/ASK, basic and qualifier-scoped patterns,
FILTER, UNION, COUNT, ORDER BY, LIMIT."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from ..kb import Literal


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Name:
    """A prefixed name such as e:usa or pq:start_time; resolved at evaluation."""

    prefix: str
    local: str

    def text(self) -> str:
        return f"{self.prefix}:{self.local}"


Term = Union[Var, Name, Literal]

COMPARE_OPS = ("=", "!=", "<", ">", "<=", ">=")


@dataclass(frozen=True)
class TriplePattern:
    subject: Term
    predicate: Term
    object: Term

    @property
    def qualifier(self) -> bool:
        """True when the predicate targets the qualifier list of the statement
        matched by the nearest preceding main pattern."""
        return isinstance(self.predicate, Name) and self.predicate.prefix == "pq"


@dataclass(frozen=True)
class Filter:
    left: Term
    op: str
    right: Term


@dataclass(frozen=True)
class Union:
    left: "GroupPattern"
    right: "GroupPattern"


@dataclass(frozen=True)
class GroupPattern:
    elements: tuple[Union[TriplePattern, Filter, "Union"], ...]


@dataclass(frozen=True)
class Count:
    var: Var
    alias: Var


@dataclass(frozen=True)
class Query:
    form: str  # "SELECT" | "ASK"
    distinct: bool
    projection: Union[tuple[Var, ...], Count, None]  # None for ASK
    body: GroupPattern
    order: Optional[tuple[Var, bool]] = None  # (variable, descending)
    limit: Optional[int] = None


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_term(term: Term) -> str:
    if isinstance(term, Var):
        return f"?{term.name}"
    if isinstance(term, Name):
        return term.text()
    if term.kind == "string":
        return _quote(term.lexical)
    if term.kind == "integer" or term.kind == "decimal":
        return term.lexical
    return f"{_quote(term.lexical)}^^{term.kind}"


def _render_group(group: GroupPattern) -> str:
    parts = []
    for el in group.elements:
        if isinstance(el, TriplePattern):
            parts.append(
                f"{render_term(el.subject)} {render_term(el.predicate)} "
                f"{render_term(el.object)} ."
            )
        elif isinstance(el, Filter):
            parts.append(
                f"FILTER({render_term(el.left)} {el.op} {render_term(el.right)})"
            )
        else:
            parts.append(f"{_render_group(el.left)} UNION {_render_group(el.right)}")
    return "{ " + " ".join(parts) + " }"


def render_query(query: Query) -> str:
    """Serialize back to query text; reparsing yields an equal AST."""
    if query.form == "ASK":
        return f"ASK {_render_group(query.body)}"
    parts = ["SELECT"]
    if query.distinct:
        parts.append("DISTINCT")
    if isinstance(query.projection, Count):
        parts.append(f"(COUNT(?{query.projection.var.name}) AS ?{query.projection.alias.name})")
    else:
        parts.extend(f"?{v.name}" for v in query.projection)
    parts.append("WHERE")
    parts.append(_render_group(query.body))
    if query.order is not None:
        var, desc = query.order
        parts.append(f"ORDER BY {'DESC' if desc else 'ASC'}(?{var.name})")
    if query.limit is not None:
        parts.append(f"LIMIT {query.limit}")
    return " ".join(parts)
