"""Deterministic lexical scoring used to rank search results.

Stands in for the embedding retrieval of production deployments; anything
implementing `Scorer` can replace it.
"""

from __future__ import annotations

from typing import Protocol

from .kb import normalize_label


class Scorer(Protocol):
    def score(self, query: str, candidate: str) -> tuple[float, float, float]:
        """Ranking key, compared descending component-wise."""


def _tokens(text: str) -> frozenset[str]:
    return frozenset(normalize_label(text).split())


def _trigrams(text: str) -> frozenset[str]:
    text = normalize_label(text)
    if len(text) < 3:
        return frozenset({text} if text else ())
    return frozenset(text[i:i + 3] for i in range(len(text) - 2))


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


class LexicalScorer:
    """Ranks by exact normalized match, then token overlap, then trigram overlap."""

    def score(self, query: str, candidate: str) -> tuple[float, float, float]:
        exact = 1.0 if normalize_label(query) == normalize_label(candidate) else 0.0
        overlap = _jaccard(_tokens(query), _tokens(candidate))
        trigram = _jaccard(_trigrams(query), _trigrams(candidate))
        return (exact, overlap, trigram)


DEFAULT_SCORER = LexicalScorer()


def lexical_score(query: str, candidate: str) -> tuple[float, float, float]:
    return DEFAULT_SCORER.score(query, candidate)


def is_match(score: tuple[float, float, float]) -> bool:
    return any(component > 0.0 for component in score)
