"""Distant-supervision trajectory construction.

Searches until some valid branch reaches the F1 threshold against the gold
answers, then serializes that branch as a training trajectory. Exported
trajectories replay byte-for-byte against the same KB.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .agent import AgentState, parse_agent_output, render_action, render_state_prompt
from .assets import PromptAssets
from .kb import KnowledgeBase
from .metrics import f1
from .mcts import SearchConfig, SearchNode, SearchTree, run_search
from .sparql import QueryExecutionError, QuerySyntaxError, canonical_answers, evaluate, parse_query
from .tools import Action, run_action

DEFAULT_F1_THRESHOLD = 0.67


@dataclass
class Trajectory:
    question_id: str
    question: str
    turns: list[tuple[Action, Optional[str]]]  # (action, observation text)
    achieved_f1: float
    predicted_sparql: str
    gold_sparql: str


@dataclass
class AnnotationOutcome:
    trajectory: Optional[Trajectory]
    skip_reason: Optional[str] = None
    search_stats: Optional[object] = None


def gold_answer_set(gold_sparql: str, kb: KnowledgeBase) -> frozenset:
    query = parse_query(gold_sparql)
    return canonical_answers(evaluate(query, kb))


def annotate_question(question_id: str, question: str, gold_sparql: str,
                      kb: KnowledgeBase, agent_backend, reward_model,
                      config: SearchConfig,
                      threshold: float = DEFAULT_F1_THRESHOLD) -> AnnotationOutcome:
    """Search until a valid branch reaches `threshold` F1 against gold.

    The first qualifying branch wins. Returns a budget skip when the search
    exhausts its limits first, and a gold-* skip when the gold query itself
    is unusable on this KB.
    """
    try:
        gold = gold_answer_set(gold_sparql, kb)
    except (QuerySyntaxError, QueryExecutionError) as exc:
        return AnnotationOutcome(None, f"gold-parse: {exc}")
    if not gold or gold == frozenset({""}):
        return AnnotationOutcome(None, "gold-empty")

    hits: list[int] = []

    def reached(tree: SearchTree, node: SearchNode) -> bool:
        if f1(node.prediction[1], gold) >= threshold:
            hits.append(node.id)
            return True
        return False

    result = run_search(question, kb, agent_backend, reward_model, config,
                        stop_when=reached, question_id=question_id)
    if not hits:
        return AnnotationOutcome(None, "budget", result.tree_stats)

    # Rebuild the winning branch from the trace.
    by_id = {rec["node_id"]: rec for rec in result.trace}
    path = []
    cursor = by_id[hits[0]]
    while cursor["parent_id"] is not None:
        path.append(cursor)
        cursor = by_id[cursor["parent_id"]]
    path.reverse()

    turns: list[tuple[Action, Optional[str]]] = []
    for rec in path:
        action = Action(tool=rec["tool"], argument=rec["argument"] or "",
                        thought=rec["thought"] or "")
        obs_text = rec["observation"]["text"] if rec["observation"] else None
        turns.append((action, obs_text))
    achieved = f1(by_id[hits[0]]["prediction"]["answers"], gold)
    trajectory = Trajectory(
        question_id=question_id,
        question=question,
        turns=turns,
        achieved_f1=achieved,
        predicted_sparql=by_id[hits[0]]["prediction"]["sparql"],
        gold_sparql=gold_sparql,
    )
    return AnnotationOutcome(trajectory, None, result.tree_stats)


def replay_trajectory(trajectory: Trajectory, kb: KnowledgeBase) -> bool:
    """Re-execute every action; observations must reproduce exactly."""
    for action, recorded in trajectory.turns:
        if action.tool == "Done":
            if recorded is not None:
                return False
            continue
        observation = run_action(kb, action)
        if observation.text != recorded:
            return False
    return True


def trajectory_messages(trajectory: Trajectory,
                        assets: PromptAssets) -> list[dict[str, str]]:
    """Chat messages in the same turn structure the agent is prompted with."""
    state = AgentState(trajectory.question)
    messages = render_state_prompt(state, assets)
    for action, obs_text in trajectory.turns:
        messages.append({"role": "assistant", "content": render_action(action)})
        if obs_text is not None:
            messages.append({"role": "user", "content": f"Observation:\n{obs_text}"})
    return messages


def export_training_file(trajectories: Sequence[Trajectory], path: str,
                         assets: PromptAssets) -> None:
    """JSON-lines: a manifest line, then one conversation record per trajectory."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "manifest", "count": len(trajectories)}) + "\n")
        for trajectory in trajectories:
            rec = {
                "id": trajectory.question_id,
                "question": trajectory.question,
                "achieved_f1": round(trajectory.achieved_f1, 6),
                "predicted_sparql": trajectory.predicted_sparql,
                "gold_sparql": trajectory.gold_sparql,
                "messages": trajectory_messages(trajectory, assets),
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def parse_training_actions(record: dict) -> list[Action]:
    """Recover the action sequence from an exported conversation record."""
    return [parse_agent_output(msg["content"]) for msg in record["messages"]
            if msg["role"] == "assistant"]


def stratified_sample(records: Sequence[dict], fraction: float = 0.1,
                      boost: Optional[dict[str, float]] = None,
                      seed: int = 0,
                      type_key: str = "type") -> list[dict]:
    """Per-type sampling for building annotation subsets.

    Takes ceil(fraction * count) of each question type; `boost` overrides the
    fraction for underrepresented types (e.g. comparative/superlative).
    """
    boost = boost or {}
    rng = random.Random(seed)
    by_type: dict[str, list[dict]] = {}
    for rec in records:
        by_type.setdefault(rec.get(type_key, "unknown"), []).append(rec)
    out: list[dict] = []
    for qtype in sorted(by_type):
        pool = by_type[qtype]
        frac = boost.get(qtype, fraction)
        take = min(len(pool), max(1, math.ceil(len(pool) * frac)))
        out.extend(rng.sample(pool, take))
    return out
