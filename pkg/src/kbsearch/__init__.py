"""Tree-search semantic parsing over in-memory knowledge bases."""

__version__ = "0.1.0"

from .kb import KnowledgeBase, Literal, Statement, load_kb, match_statements, node_meta, save_kb
from .mcts import SearchConfig, SearchResult, run_search
from .tools import Action, Observation

__all__ = [
    "__version__",
    "KnowledgeBase", "Literal", "Statement", "load_kb", "match_statements",
    "node_meta", "save_kb",
    "SearchConfig", "SearchResult", "run_search",
    "Action", "Observation",
]
