"""Tokenizer and recursive-descent parser for the query subset.

Parsing is total: any input either yields a Query or raises QuerySyntaxError
with the byte offset and an expected-token hint (that text is what an agent
sees as the tool observation).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..kb import Literal, LITERAL_KINDS
from .ast import Count, Filter, GroupPattern, Name, Query, Term, TriplePattern, Union, Var

KEYWORDS = {"SELECT", "ASK", "DISTINCT", "WHERE", "FILTER", "UNION",
            "ORDER", "BY", "ASC", "DESC", "LIMIT", "COUNT", "AS"}


class QuerySyntaxError(Exception):
    def __init__(self, message: str, offset: int):
        super().__init__(f"syntax error at offset {offset}: {message}")
        self.offset = offset
        self.reason = message


@dataclass(frozen=True)
class _Token:
    kind: str  # VAR NAME STRING NUMBER WORD PUNCT OP EOF
    value: object
    offset: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<name>[A-Za-z][A-Za-z0-9_]*:[A-Za-z0-9_](?:[A-Za-z0-9_\-]|\.(?=[A-Za-z0-9_]))*)
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<word>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|=|<|>)
  | (?P<punct>[{}().,])
    """,
    re.VERBOSE,
)

_STRING_SUFFIX_RE = re.compile(r"\^\^([A-Za-z]+)")


def _scan_string(text: str, start: int) -> tuple[str, int]:
    """Scan a quoted string starting at `start`; returns (value, end_offset)."""
    quote = text[start]
    out = []
    i = start + 1
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text):
                raise QuerySyntaxError("unterminated string escape", i)
            nxt = text[i + 1]
            out.append({"n": "\n", "t": "\t"}.get(nxt, nxt))
            i += 2
            continue
        if ch == quote:
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise QuerySyntaxError(f'unterminated string (expected closing {quote})', start)


def tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(text):
        if text[i] in "\"'":
            start = i
            value, i = _scan_string(text, i)
            kind = "string"
            m = _STRING_SUFFIX_RE.match(text, i)
            if m:
                kind = m.group(1).lower()
                if kind not in LITERAL_KINDS:
                    raise QuerySyntaxError(f"unknown literal kind {kind!r}", i + 2)
                i = m.end()
            try:
                lit = Literal.of(kind, value)
            except Exception as exc:
                raise QuerySyntaxError(str(exc), start) from None
            tokens.append(_Token("STRING", lit, start))
            continue
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[i]!r}", i)
        i = m.end()
        if m.lastgroup == "ws":
            continue
        value = m.group()
        if m.lastgroup == "var":
            tokens.append(_Token("VAR", value[1:], m.start()))
        elif m.lastgroup == "name":
            prefix, local = value.split(":", 1)
            tokens.append(_Token("NAME", (prefix, local), m.start()))
        elif m.lastgroup == "number":
            kind = "decimal" if "." in value else "integer"
            tokens.append(_Token("NUMBER", Literal.of(kind, value), m.start()))
        elif m.lastgroup == "word":
            tokens.append(_Token("WORD", value, m.start()))
        elif m.lastgroup == "op":
            tokens.append(_Token("OP", value, m.start()))
        else:
            tokens.append(_Token("PUNCT", value, m.start()))
    tokens.append(_Token("EOF", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, expected: str) -> QuerySyntaxError:
        tok = self.peek()
        found = "end of input" if tok.kind == "EOF" else repr(
            self.text[tok.offset:tok.offset + 20].split("\n")[0])
        return QuerySyntaxError(f"expected {expected}, found {found}", tok.offset)

    def is_word(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "WORD" and tok.value.upper() in words

    def expect_word(self, word: str) -> None:
        if not self.is_word(word):
            raise self.error(f'"{word}"')
        self.next()

    def expect_punct(self, ch: str) -> None:
        tok = self.peek()
        if tok.kind != "PUNCT" or tok.value != ch:
            raise self.error(f'"{ch}"')
        self.next()

    # grammar ---------------------------------------------------------------

    def parse(self) -> Query:
        if self.is_word("SELECT"):
            query = self.select_query()
        elif self.is_word("ASK"):
            query = self.ask_query()
        else:
            raise self.error('"SELECT" or "ASK"')
        if self.peek().kind != "EOF":
            raise self.error("end of query")
        _validate(query)
        return query

    def select_query(self) -> Query:
        self.next()  # SELECT
        distinct = False
        if self.is_word("DISTINCT"):
            distinct = True
            self.next()
        projection, count_distinct = self.projection()
        distinct = distinct or count_distinct
        if isinstance(projection, tuple) and not projection:
            raise self.error("projection variable")
        if self.is_word("WHERE"):
            self.next()
        body = self.group()
        order = None
        if self.is_word("ORDER"):
            self.next()
            self.expect_word("BY")
            order = self.order_expr()
        limit = None
        if self.is_word("LIMIT"):
            self.next()
            tok = self.peek()
            if tok.kind != "NUMBER" or tok.value.kind != "integer" or tok.value.numeric <= 0:
                raise self.error("positive integer")
            limit = int(tok.value.numeric)
            self.next()
        return Query("SELECT", distinct, projection, body, order, limit)

    def projection(self):
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.value == "(" or self.is_word("COUNT"):
            wrapped = tok.kind == "PUNCT"
            if wrapped:
                self.next()
            count, count_distinct = self.count_expr()
            if wrapped:
                self.expect_punct(")")
            return count, count_distinct
        variables = []
        while self.peek().kind == "VAR":
            variables.append(Var(self.next().value))
        return tuple(variables), False

    def count_expr(self) -> tuple[Count, bool]:
        self.expect_word("COUNT")
        self.expect_punct("(")
        distinct_inside = False
        if self.is_word("DISTINCT"):
            distinct_inside = True
            self.next()
        if self.peek().kind != "VAR":
            raise self.error("variable")
        var = Var(self.next().value)
        self.expect_punct(")")
        alias = Var("count")
        if self.is_word("AS"):
            self.next()
            if self.peek().kind != "VAR":
                raise self.error("alias variable")
            alias = Var(self.next().value)
        return Count(var, alias), distinct_inside

    def ask_query(self) -> Query:
        self.next()  # ASK
        if self.is_word("WHERE"):
            self.next()
        body = self.group()
        return Query("ASK", False, None, body)

    def order_expr(self) -> tuple[Var, bool]:
        desc = False
        if self.is_word("ASC", "DESC"):
            desc = self.next().value.upper() == "DESC"
            self.expect_punct("(")
            if self.peek().kind != "VAR":
                raise self.error("variable")
            var = Var(self.next().value)
            self.expect_punct(")")
            return (var, desc)
        if self.peek().kind != "VAR":
            raise self.error("variable")
        return (Var(self.next().value), False)

    def group(self) -> GroupPattern:
        self.expect_punct("{")
        elements = []
        while True:
            tok = self.peek()
            if tok.kind == "PUNCT" and tok.value == "}":
                self.next()
                return GroupPattern(tuple(elements))
            if tok.kind == "EOF":
                raise self.error('"}"')
            if tok.kind == "PUNCT" and tok.value == "{":
                elements.append(self.union())
            elif self.is_word("FILTER"):
                elements.append(self.filter_expr())
            else:
                elements.append(self.triple())

    def union(self) -> Union:
        left = self.group()
        if not self.is_word("UNION"):
            raise self.error('"UNION"')
        self.next()
        node = Union(left, self.group())
        while self.is_word("UNION"):
            self.next()
            branch = self.group()
            node = Union(GroupPattern((node,)), branch)
        return node

    def filter_expr(self) -> Filter:
        self.next()  # FILTER
        self.expect_punct("(")
        left = self.term("filter operand")
        tok = self.peek()
        if tok.kind != "OP":
            raise self.error("comparison operator")
        op = self.next().value
        right = self.term("filter operand")
        self.expect_punct(")")
        return Filter(left, op, right)

    def triple(self) -> TriplePattern:
        subject = self.term("triple subject")
        predicate = self.term("triple predicate")
        obj = self.term("triple object")
        for pos, term in (("subject", subject), ("object", obj)):
            if isinstance(term, Name) and term.prefix == "pq":
                raise QuerySyntaxError(
                    f"qualifier prefix pq: is only valid in predicate position, "
                    f"found in {pos}", self.tokens[self.pos - 1].offset)
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.value == ".":
            self.next()
        return TriplePattern(subject, predicate, obj)

    def term(self, what: str) -> Term:
        tok = self.peek()
        if tok.kind == "VAR":
            return Var(self.next().value)
        if tok.kind == "NAME":
            prefix, local = self.next().value
            return Name(prefix, local)
        if tok.kind in ("STRING", "NUMBER"):
            return self.next().value
        raise self.error(what)


def _collect(group: GroupPattern):
    """Yield (element, group) pairs depth-first, in evaluation order."""
    for el in group.elements:
        if isinstance(el, Union):
            yield el, group
            yield from _collect(el.left)
            yield from _collect(el.right)
        else:
            yield el, group


def _body_vars(group: GroupPattern) -> set[str]:
    out: set[str] = set()
    for el, _g in _collect(group):
        if isinstance(el, TriplePattern):
            for term in (el.subject, el.predicate, el.object):
                if isinstance(term, Var):
                    out.add(term.name)
    return out


def _has_pattern(group: GroupPattern) -> bool:
    return any(isinstance(el, TriplePattern) for el, _g in _collect(group))


def _check_qualifier_scope(group: GroupPattern, main_seen: bool) -> bool:
    """Every qualifier pattern needs a main pattern earlier on its branch."""
    for el in group.elements:
        if isinstance(el, TriplePattern):
            if el.qualifier and not main_seen:
                raise QuerySyntaxError(
                    "qualifier pattern (pq:) requires a preceding main pattern", 0)
            if not el.qualifier:
                main_seen = True
        elif isinstance(el, Union):
            left = _check_qualifier_scope(el.left, main_seen)
            right = _check_qualifier_scope(el.right, main_seen)
            main_seen = left and right
    return main_seen


def _validate(query: Query) -> None:
    body_vars = _body_vars(query.body)
    if query.form == "SELECT":
        if isinstance(query.projection, Count):
            if query.projection.var.name not in body_vars:
                raise QuerySyntaxError(
                    f"counted variable ?{query.projection.var.name} does not appear "
                    "in the query body", 0)
        else:
            for var in query.projection:
                if var.name not in body_vars:
                    raise QuerySyntaxError(
                        f"projected variable ?{var.name} does not appear in the "
                        "query body", 0)
    if query.order is not None and query.order[0].name not in body_vars:
        raise QuerySyntaxError(
            f"ordered variable ?{query.order[0].name} does not appear in the "
            "query body", 0)
    for el, _g in _collect(query.body):
        if isinstance(el, Union):
            for branch, side in ((el.left, "left"), (el.right, "right")):
                if not _has_pattern(branch):
                    raise QuerySyntaxError(
                        f"{side} UNION branch contains no triple pattern", 0)
    _check_qualifier_scope(query.body, False)


def parse_query(text: str) -> Query:
    """Parse query text into an AST; raises QuerySyntaxError on bad input."""
    return _Parser(text).parse()
