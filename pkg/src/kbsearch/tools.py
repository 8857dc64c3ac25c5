"""The agent's action space: SearchNodes, SearchGraphPatterns, ExecuteSPARQL, Done.

Every tool call returns a bounded textual Observation (at most MAX_ITEMS
rendered items, "... and N more" when truncated). Tool failures are carried
inside the Observation so a search never aborts on agent mistakes.

The rendering formats here are frozen: they appear in prompts and exported
training trajectories.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .kb import KnowledgeBase, node_meta
from .lexical import DEFAULT_SCORER, Scorer, is_match
from .sparql import (
    Count,
    QueryExecutionError,
    QuerySyntaxError,
    canonical_answers,
    evaluate,
    parse_query,
    render_value,
)
from .sparql.evaluator import NodeVal

TOOLS = ("SearchNodes", "SearchGraphPatterns", "ExecuteSPARQL", "Done")
MAX_ITEMS = 10
_DESC_LIMIT = 80


@dataclass(frozen=True)
class Action:
    """One tool call, with the agent's thought and the verbatim completion."""

    tool: str
    argument: str = ""
    thought: str = ""
    raw: str = ""


@dataclass(frozen=True)
class Observation:
    text: str
    item_count: int = 0
    error: Optional[str] = None
    answers: Optional[tuple[str, ...]] = None  # full canonical answers (ExecuteSPARQL)
    content_key: tuple[str, ...] = field(default=(), repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None


def _error_observation(kind: str, message: str) -> Observation:
    return Observation(text=f"Error: {message}", error=message,
                       content_key=(kind, "error", message))


def _render_items(items: list[str], empty_text: str) -> tuple[str, int]:
    count = len(items)
    if count == 0:
        return empty_text, 0
    lines = [f"{i}. {item}" for i, item in enumerate(items[:MAX_ITEMS], start=1)]
    if count > MAX_ITEMS:
        lines.append(f"... and {count - MAX_ITEMS} more")
    return "\n".join(lines), count


def search_nodes(kb: KnowledgeBase, query_text: str,
                 scorer: Scorer = DEFAULT_SCORER) -> Observation:
    """Top-10 entities and classes ranked lexically against the query text."""
    query_text = query_text.strip()
    if not query_text:
        return _error_observation("nodes", "SearchNodes requires a non-empty query")
    scored = []
    for node_id, (label, _desc) in kb.entities.items():
        score = scorer.score(query_text, label)
        if is_match(score):
            scored.append((score, node_id, label))
    for node_id, label in kb.classes.items():
        score = scorer.score(query_text, label)
        if is_match(score):
            scored.append((score, node_id, label))
    scored.sort(key=lambda item: (tuple(-c for c in item[0]), item[1]))

    items = []
    for _score, node_id, label in scored:
        label, desc, is_class = node_meta(kb, node_id)
        entry = f"{label} ({node_id})"
        if is_class:
            entry += " [class]"
        elif desc:
            if len(desc) > _DESC_LIMIT:
                desc = desc[:_DESC_LIMIT] + "..."
            entry += f": {desc}"
        items.append(entry)
    text, count = _render_items(items, "No results.")
    return Observation(text=text, item_count=count,
                       content_key=("nodes", *(node_id for _s, node_id, _l in scored)))


def _anchor_entity(kb: KnowledgeBase, anchor_query: str) -> NodeVal:
    """Evaluate the anchor SELECT and return the first bound entity."""
    query = parse_query(anchor_query)
    if query.form != "SELECT" or isinstance(query.projection, Count):
        raise QueryExecutionError("anchor must be a SELECT projecting an entity variable")
    rs = evaluate(query, kb)
    for row in rs.rows:
        for value in row:
            if isinstance(value, NodeVal):
                return value
    raise QueryExecutionError("anchor query binds no entity")


def search_graph_patterns(kb: KnowledgeBase, anchor_query: str,
                          semantic_hint: str = "",
                          scorer: Scorer = DEFAULT_SCORER) -> Observation:
    """One-hop patterns around the anchored entity, ranked against the hint.

    Outgoing patterns render as (?e, predicate, sample); incoming ones as
    (sample, predicate, ?e). Qualifier keys seen on a predicate's statements
    are listed so the agent learns which pq: names exist.
    """
    try:
        anchor = _anchor_entity(kb, anchor_query)
    except (QuerySyntaxError, QueryExecutionError) as exc:
        return _error_observation("patterns", str(exc))

    # direction, predicate -> (sample statement, qualifier keys)
    groups: dict[tuple[str, str], tuple] = {}
    for st in kb.statements:
        directions = []
        if st.subject == anchor.id:
            directions.append("out")
        obj = st.object
        if isinstance(obj, str) and obj == anchor.id:
            directions.append("in")
        for direction in directions:
            key = (st.predicate, direction)
            if key not in groups:
                groups[key] = (st, set())
            groups[key][1].update(p for p, _v in st.qualifiers)

    ranked = sorted(
        groups.items(),
        key=lambda item: (
            tuple(-c for c in scorer.score(semantic_hint, kb.predicates[item[0][0]])),
            item[0][0],
            item[0][1],
        ),
    )

    items = []
    for (pred_id, direction), (st, qual_keys) in ranked:
        if direction == "out":
            sample = render_value(_sample_value(st.object, kb))
            entry = f"(?e, {pred_id}, {sample})"
        else:
            sample = f"{st.subject} ({kb.node_label(st.subject)})"
            entry = f"({sample}, {pred_id}, ?e)"
        if qual_keys:
            entry += f" [qualifiers: {', '.join(sorted(qual_keys))}]"
        items.append(entry)
    text, count = _render_items(items, "No results.")
    return Observation(
        text=text, item_count=count,
        content_key=("patterns", anchor.id,
                     *(f"{d}:{p}" for (p, d), _ in ranked)))


def _sample_value(obj, kb: KnowledgeBase):
    if isinstance(obj, str):
        return NodeVal(obj, kb.node_label(obj))
    return obj


def execute_sparql(kb: KnowledgeBase, query_text: str) -> Observation:
    """Parse and evaluate; carries the full canonical answer set for voting."""
    try:
        query = parse_query(query_text)
        rs = evaluate(query, kb)
    except (QuerySyntaxError, QueryExecutionError) as exc:
        return _error_observation("sparql", str(exc))
    answers = canonical_answers(rs)
    # Render in first-appearance row order so ORDER BY stays visible.
    ordered: list[str] = []
    seen = set()
    if rs.form == "ASK":
        ordered = ["true" if rs.ask else "false"]
    else:
        for row in rs.rows:
            rendered = "\t".join(render_value(v) for v in row)
            if rendered not in seen:
                seen.add(rendered)
                ordered.append(rendered)
    text, count = _render_items(ordered, "Empty result.")
    return Observation(
        text=text, item_count=count, answers=tuple(ordered),
        content_key=("sparql", *sorted(answers)))


_QUOTED_RE = re.compile(r"""\s*(['"])""")


def _decode_quoted(text: str, start: int) -> tuple[str, int]:
    quote = text[start]
    out = []
    i = start + 1
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text) and text[i + 1] in ("\\", "'", '"'):
            out.append(text[i + 1])
            i += 2
            continue
        if ch == quote:
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise ValueError("unterminated quoted argument")


def decode_text_argument(argument: str) -> str:
    """Decode a tool argument that is a single (possibly quoted) text."""
    stripped = argument.strip()
    if stripped and stripped[0] in "'\"":
        try:
            value, end = _decode_quoted(stripped, 0)
        except ValueError:
            return stripped
        if stripped[end:].strip():
            return stripped  # trailing junk: treat the raw text as the argument
        return value
    return stripped


_SEMANTIC_RE = re.compile(r",\s*semantic\s*=\s*", re.IGNORECASE)


def decode_pattern_argument(argument: str) -> tuple[str, str]:
    """Split a SearchGraphPatterns argument into (anchor query, semantic hint)."""
    stripped = argument.strip()
    if stripped and stripped[0] in "'\"":
        try:
            anchor, end = _decode_quoted(stripped, 0)
        except ValueError:
            return stripped, ""
        rest = stripped[end:]
        m = _SEMANTIC_RE.match(rest)
        if m:
            return anchor, decode_text_argument(rest[m.end():])
        return anchor, ""
    m = _SEMANTIC_RE.search(stripped)
    if m:
        return stripped[:m.start()], decode_text_argument(stripped[m.end():])
    return stripped, ""


def run_action(kb: KnowledgeBase, action: Action,
               scorer: Scorer = DEFAULT_SCORER) -> Observation:
    """Execute a non-Done action deterministically."""
    if action.tool == "SearchNodes":
        return search_nodes(kb, decode_text_argument(action.argument), scorer)
    if action.tool == "SearchGraphPatterns":
        anchor, hint = decode_pattern_argument(action.argument)
        return search_graph_patterns(kb, anchor, hint, scorer)
    if action.tool == "ExecuteSPARQL":
        return execute_sparql(kb, decode_text_argument(action.argument))
    raise ValueError(f"{action.tool} produces no observation")


def observation_fingerprint(action: Action, observation: Optional[Observation]) -> str:
    """Stable digest over (tool, canonical result content).

    Two actions with different thoughts but the same tool and execution result
    collide, which is what expansion dedup wants.
    """
    if action.tool == "Done":
        content: tuple[str, ...] = ()
    else:
        content = observation.content_key if observation is not None else ()
    payload = json.dumps([action.tool, list(content)], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def sparql_text(action: Action) -> str:
    """The query text an ExecuteSPARQL action would run."""
    return decode_text_argument(action.argument)
