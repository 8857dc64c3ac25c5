"""Parser and evaluator for the query subset used by the agent tools."""

from .ast import (
    Count,
    Filter,
    GroupPattern,
    Name,
    Query,
    TriplePattern,
    Union,
    Var,
    render_query,
)
from .evaluator import (
    NodeVal,
    PredVal,
    QueryExecutionError,
    ResultSet,
    Value,
    canonical_answers,
    compare_values,
    evaluate,
    render_value,
    sort_key,
)
from .parser import QuerySyntaxError, parse_query

__all__ = [
    "Count", "Filter", "GroupPattern", "Name", "Query", "TriplePattern",
    "Union", "Var", "render_query",
    "NodeVal", "PredVal", "QueryExecutionError", "ResultSet", "Value",
    "canonical_answers", "compare_values", "evaluate", "render_value", "sort_key",
    "QuerySyntaxError", "parse_query",
]
