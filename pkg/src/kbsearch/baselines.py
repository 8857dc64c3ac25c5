"""Linear, BFS, DFS and random baselines.

All tree strategies share run_search's expansion, dedup, terminal-validity,
early-stop and voting rules; only node selection (and for "random", the
scoring source) differs, so per-question budgets stay comparable.
"""

from __future__ import annotations

from typing import Optional

from .agent import AgentTransportError, propose_actions
from .kb import KnowledgeBase
from .mcts import (
    SearchConfig,
    SearchResult,
    SearchTree,
    TerminalPrediction,
    TreeStats,
    is_valid_terminal,
    run_search,
    serialize_tree,
    vote,
)
from .reward import NullRewardModel, RandomRewardModel
from .tools import run_action, sparql_text


def run_bfs(question: str, kb: KnowledgeBase, agent_backend,
            config: SearchConfig, question_id: Optional[str] = None) -> SearchResult:
    return run_search(question, kb, agent_backend, NullRewardModel(), config,
                      strategy="bfs", question_id=question_id)


def run_dfs(question: str, kb: KnowledgeBase, agent_backend,
            config: SearchConfig, question_id: Optional[str] = None) -> SearchResult:
    return run_search(question, kb, agent_backend, NullRewardModel(), config,
                      strategy="dfs", question_id=question_id)


def run_random(question: str, kb: KnowledgeBase, agent_backend,
               config: SearchConfig, question_id: Optional[str] = None) -> SearchResult:
    """Random scoring: the full UCT loop driven by seeded uniform rewards."""
    return run_search(question, kb, agent_backend,
                      RandomRewardModel(config.seed), config,
                      strategy="random", question_id=question_id)


def run_random_select(question: str, kb: KnowledgeBase, agent_backend,
                      config: SearchConfig,
                      question_id: Optional[str] = None) -> SearchResult:
    """The other reading of a random baseline: uniform node selection."""
    return run_search(question, kb, agent_backend, NullRewardModel(), config,
                      strategy="random-select", question_id=question_id)


def run_linear(question: str, kb: KnowledgeBase, agent_backend,
               config: SearchConfig, runs: int = 1,
               question_id: Optional[str] = None) -> SearchResult:
    """Single-chain decisions: one action per step until Done or max_rounds.

    With runs > 1, valid-terminal predictions are collected across runs and
    voted on exactly like the tree strategies.
    """
    predictions: list[TerminalPrediction] = []
    trace: list[dict] = []
    stats = TreeStats()

    for run_index in range(runs):
        tree = SearchTree(question)
        node = tree.root
        for _round in range(config.max_rounds):
            state = tree.state_for(node)
            try:
                actions, failures = propose_actions(agent_backend, state, 1)
            except AgentTransportError:
                stats.degraded_expansions += 1
                break
            stats.parse_failures += failures
            if not actions:
                break
            action = actions[0]
            observation = None if action.tool == "Done" else run_action(kb, action)
            child = tree.add_child(node, action, observation)
            if action.tool == "Done":
                child.terminal = True
                child.valid_terminal = is_valid_terminal(tree, child)
                if child.valid_terminal:
                    parent = tree.nodes[child.parent]
                    child.prediction = (sparql_text(parent.action),
                                        parent.observation.answers)
                    predictions.append(TerminalPrediction(
                        node_id=run_index * 1000 + child.id,
                        sparql=child.prediction[0],
                        answers=child.prediction[1],
                        mean_reward=0.0))
                    stats.valid_terminals += 1
                break
            node = child
        stats.node_count += tree.stats.node_count
        stats.max_depth = max(stats.max_depth, tree.stats.max_depth)
        stats.simulations += tree.stats.node_count - 1
        records = serialize_tree(tree, "linear", question_id)
        for rec in records:
            rec["run"] = run_index
        trace.extend(records)

    answer, chosen = vote(predictions)
    return SearchResult(answer=answer, chosen_sparql=chosen,
                        terminal_predictions=predictions, tree_stats=stats,
                        trace=trace, strategy="linear")
