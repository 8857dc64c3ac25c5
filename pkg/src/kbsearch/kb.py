"""In-memory knowledge base: entities, classes, predicates and qualified statements.

The store is loaded from a line-oriented JSON file (one record per line, see
`load_kb`) and is immutable afterwards, so it is safe to share across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Union


class KbError(Exception):
    """Malformed KB file, dangling reference, or unknown-id lookup."""


LITERAL_KINDS = ("string", "integer", "decimal", "date", "year")
NUMERIC_KINDS = ("integer", "decimal", "year")

_PUNCT_RE = re.compile(r"[^\w\s]")
_WS_RE = re.compile(r"\s+")
_DATE_RE = re.compile(r"^(-?\d{1,5})-(\d{1,2})-(\d{1,2})$")


def normalize_label(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    text = _PUNCT_RE.sub(" ", text.lower())
    return _WS_RE.sub(" ", text).strip()


@dataclass(frozen=True)
class Literal:
    """A typed literal value. Equality is (kind, canonical lexical form)."""

    kind: str
    lexical: str
    numeric: Optional[Union[int, float]] = None

    @staticmethod
    def of(kind: str, lexical: str) -> "Literal":
        """Build a literal with a canonical lexical form; validates the kind."""
        if kind not in LITERAL_KINDS:
            raise KbError(f"unknown literal kind {kind!r}")
        lexical = str(lexical)
        if kind == "string":
            return Literal("string", lexical)
        if kind in ("integer", "year"):
            try:
                value = int(lexical)
            except ValueError:
                raise KbError(f"bad {kind} literal {lexical!r}") from None
            return Literal(kind, str(value), value)
        if kind == "decimal":
            try:
                value = float(lexical)
            except ValueError:
                raise KbError(f"bad decimal literal {lexical!r}") from None
            if value != value or value in (float("inf"), float("-inf")):
                raise KbError(f"non-finite decimal literal {lexical!r}")
            return Literal("decimal", repr(value), value)
        # date
        m = _DATE_RE.match(lexical)
        if not m:
            raise KbError(f"bad date literal {lexical!r} (expected YYYY-MM-DD)")
        y, mo, d = (int(g) for g in m.groups())
        if not (1 <= mo <= 12 and 1 <= d <= 31):
            raise KbError(f"bad date literal {lexical!r}")
        return Literal("date", f"{y:04d}-{mo:02d}-{d:02d}")

    def date_key(self) -> tuple:
        """Calendar ordering key; only meaningful for date literals."""
        m = _DATE_RE.match(self.lexical)
        if not m:
            raise KbError(f"not a date literal: {self.lexical!r}")
        return tuple(int(g) for g in m.groups())


# A statement object (or qualifier value) is a node id or a literal.
TermValue = Union[str, Literal]


def _term_key(value: TermValue) -> tuple:
    if isinstance(value, Literal):
        return ("literal", value.kind, value.lexical)
    return ("node", value)


@dataclass(frozen=True, eq=False)
class Statement:
    """One subject-predicate-object statement with optional qualifiers.

    Qualifier order is preserved for display but ignored by equality.
    """

    subject: str
    predicate: str
    object: TermValue
    qualifiers: tuple[tuple[str, TermValue], ...] = ()

    def _key(self) -> tuple:
        quals = tuple(sorted((p, _term_key(v)) for p, v in self.qualifiers))
        return (self.subject, self.predicate, _term_key(self.object), quals)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Statement):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())


@dataclass
class KnowledgeBase:
    """Immutable store over E (entities), C (classes), P (predicates) and statements."""

    entities: dict[str, tuple[str, Optional[str]]]  # id -> (label, description)
    classes: dict[str, str]  # id -> label
    predicates: dict[str, str]  # id -> label
    statements: tuple[Statement, ...]
    label_index: dict[str, tuple[str, ...]] = field(default_factory=dict)
    _by_subject: dict[str, tuple[int, ...]] = field(default_factory=dict)
    _by_predicate: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def has_node(self, node_id: str) -> bool:
        return node_id in self.entities or node_id in self.classes

    def has_predicate(self, pred_id: str) -> bool:
        return pred_id in self.predicates

    def node_label(self, node_id: str) -> str:
        if node_id in self.entities:
            return self.entities[node_id][0]
        if node_id in self.classes:
            return self.classes[node_id]
        raise KbError(f"unknown node id {node_id!r}")

    def predicate_label(self, pred_id: str) -> str:
        try:
            return self.predicates[pred_id]
        except KeyError:
            raise KbError(f"unknown predicate id {pred_id!r}") from None


def node_meta(kb: KnowledgeBase, node_id: str) -> tuple[str, Optional[str], bool]:
    """Return (label, description, is_class) for a declared node."""
    if node_id in kb.entities:
        label, desc = kb.entities[node_id]
        return label, desc, False
    if node_id in kb.classes:
        return kb.classes[node_id], None, True
    raise KbError(f"unknown node id {node_id!r}")


def match_statements(
    kb: KnowledgeBase,
    subject: Optional[str] = None,
    predicate: Optional[str] = None,
    object: Optional[TermValue] = None,
) -> list[Statement]:
    """Statements agreeing with every bound position, in load order.

    Unknown ids simply match nothing; this never raises.
    """
    if subject is not None:
        positions = kb._by_subject.get(subject, ())
    elif predicate is not None:
        positions = kb._by_predicate.get(predicate, ())
    else:
        positions = range(len(kb.statements))
    out = []
    for i in positions:
        st = kb.statements[i]
        if subject is not None and st.subject != subject:
            continue
        if predicate is not None and st.predicate != predicate:
            continue
        if object is not None and _term_key(st.object) != _term_key(object):
            continue
        out.append(st)
    return out


def _parse_term(raw: object, where: str) -> TermValue:
    if not isinstance(raw, dict):
        raise KbError(f"{where}: term must be an object, got {type(raw).__name__}")
    if "node" in raw:
        node = raw["node"]
        if not isinstance(node, str) or not node:
            raise KbError(f"{where}: bad node reference")
        return node
    if "literal" in raw:
        return Literal.of(raw.get("kind", "string"), raw["literal"])
    raise KbError(f"{where}: term needs a 'node' or 'literal' key")


def _build_indexes(kb: KnowledgeBase) -> None:
    label_index: dict[str, list[str]] = {}
    for node_id, (label, _desc) in kb.entities.items():
        label_index.setdefault(normalize_label(label), []).append(node_id)
    for node_id, label in kb.classes.items():
        label_index.setdefault(normalize_label(label), []).append(node_id)
    kb.label_index = {k: tuple(v) for k, v in label_index.items()}

    by_subject: dict[str, list[int]] = {}
    by_predicate: dict[str, list[int]] = {}
    for i, st in enumerate(kb.statements):
        by_subject.setdefault(st.subject, []).append(i)
        by_predicate.setdefault(st.predicate, []).append(i)
    kb._by_subject = {k: tuple(v) for k, v in by_subject.items()}
    kb._by_predicate = {k: tuple(v) for k, v in by_predicate.items()}


def load_kb(path: str) -> KnowledgeBase:
    """Load a KB from a JSON-lines file.

    Record kinds: "manifest" (required header: entities/predicates/statements
    counts), "entity" {id,label,description?}, "class" {id,label},
    "predicate" {id,label}, "statement" {s,p,o,qualifiers?}.
    """
    records: list[tuple[int, dict]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise KbError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "kind" not in rec:
                raise KbError(f"{path}:{lineno}: record must be an object with a 'kind'")
            records.append((lineno, rec))

    if not records or records[0][1].get("kind") != "manifest":
        raise KbError(f"{path}: first record must be a manifest header")
    manifest = records[0][1]

    entities: dict[str, tuple[str, Optional[str]]] = {}
    classes: dict[str, str] = {}
    predicates: dict[str, str] = {}
    raw_statements: list[tuple[int, dict]] = []

    for lineno, rec in records[1:]:
        kind = rec["kind"]
        if kind == "entity":
            node_id, label = rec.get("id"), rec.get("label")
            if not node_id or label is None:
                raise KbError(f"{path}:{lineno}: entity needs id and label")
            if node_id in entities or node_id in classes:
                raise KbError(f"{path}:{lineno}: duplicate node id {node_id!r}")
            entities[node_id] = (label, rec.get("description"))
        elif kind == "class":
            node_id, label = rec.get("id"), rec.get("label")
            if not node_id or label is None:
                raise KbError(f"{path}:{lineno}: class needs id and label")
            if node_id in entities or node_id in classes:
                raise KbError(f"{path}:{lineno}: duplicate node id {node_id!r}")
            classes[node_id] = label
        elif kind == "predicate":
            pred_id, label = rec.get("id"), rec.get("label")
            if not pred_id or label is None:
                raise KbError(f"{path}:{lineno}: predicate needs id and label")
            if pred_id in predicates:
                raise KbError(f"{path}:{lineno}: duplicate predicate id {pred_id!r}")
            predicates[pred_id] = label
        elif kind == "statement":
            raw_statements.append((lineno, rec))
        elif kind == "manifest":
            raise KbError(f"{path}:{lineno}: duplicate manifest record")
        else:
            raise KbError(f"{path}:{lineno}: unknown record kind {kind!r}")

    def check_node(node_id: str, lineno: int) -> None:
        if node_id not in entities and node_id not in classes:
            raise KbError(f"{path}:{lineno}: dangling reference to node {node_id!r}")

    statements: list[Statement] = []
    for lineno, rec in raw_statements:
        try:
            subject = rec["s"]
            predicate = rec["p"]
            obj = _parse_term(rec["o"], f"{path}:{lineno}")
        except KeyError as exc:
            raise KbError(f"{path}:{lineno}: statement missing {exc.args[0]!r}") from None
        check_node(subject, lineno)
        if predicate not in predicates:
            raise KbError(f"{path}:{lineno}: dangling reference to predicate {predicate!r}")
        if isinstance(obj, str):
            check_node(obj, lineno)
        qualifiers = []
        for q in rec.get("qualifiers", ()):
            qp = q.get("p")
            if qp not in predicates:
                raise KbError(f"{path}:{lineno}: dangling reference to predicate {qp!r}")
            qv = _parse_term(q.get("o"), f"{path}:{lineno}")
            if isinstance(qv, str):
                check_node(qv, lineno)
            qualifiers.append((qp, qv))
        statements.append(Statement(subject, predicate, obj, tuple(qualifiers)))

    for key, expected in (("entities", len(entities)), ("predicates", len(predicates)),
                          ("statements", len(statements))):
        declared = manifest.get(key)
        if declared != expected:
            raise KbError(
                f"{path}: manifest declares {declared} {key}, file contains {expected}"
            )

    kb = KnowledgeBase(entities, classes, predicates, tuple(statements))
    _build_indexes(kb)
    return kb


def _term_record(value: TermValue) -> dict:
    if isinstance(value, Literal):
        rec = {"literal": value.lexical}
        if value.kind != "string":
            rec["kind"] = value.kind
        return rec
    return {"node": value}


def save_kb(kb: KnowledgeBase, path: str) -> None:
    """Write a KB back out in the same JSON-lines format `load_kb` reads."""
    with open(path, "w", encoding="utf-8") as fh:
        manifest = {
            "kind": "manifest",
            "entities": len(kb.entities),
            "predicates": len(kb.predicates),
            "statements": len(kb.statements),
        }
        fh.write(json.dumps(manifest, ensure_ascii=False) + "\n")
        for node_id, (label, desc) in kb.entities.items():
            rec = {"kind": "entity", "id": node_id, "label": label}
            if desc is not None:
                rec["description"] = desc
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        for node_id, label in kb.classes.items():
            fh.write(json.dumps({"kind": "class", "id": node_id, "label": label},
                                ensure_ascii=False) + "\n")
        for pred_id, label in kb.predicates.items():
            fh.write(json.dumps({"kind": "predicate", "id": pred_id, "label": label},
                                ensure_ascii=False) + "\n")
        for st in kb.statements:
            rec = {"kind": "statement", "s": st.subject, "p": st.predicate,
                   "o": _term_record(st.object)}
            if st.qualifiers:
                rec["qualifiers"] = [{"p": p, "o": _term_record(v)} for p, v in st.qualifiers]
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
