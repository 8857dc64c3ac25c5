"""The tree search loop: UCT selection over non-terminal nodes, expansion
with execution-result dedup, immediate evaluation of new states, depth-decayed
backpropagation, validity-aware early stopping, and answer voting.

One tree is mutated by a single logical thread; run searches for different
questions concurrently instead.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .agent import AgentState, AgentTransportError, propose_actions
from .kb import KnowledgeBase
from .tools import Action, Observation, observation_fingerprint, run_action, sparql_text

STRATEGIES = ("mcts", "bfs", "dfs", "random", "random-select", "linear")

_EXHAUST_AFTER = 2  # consecutive fruitless expansions before a node retires


@dataclass(frozen=True)
class SearchConfig:
    n_expand: int = 5
    k_early_stop: int = 5
    gamma: float = 0.1
    d_exp: int = 5
    max_simulations: int = 50
    max_rounds: int = 12
    seed: int = 0
    decay_by_node_depth: bool = True  # False: decay by the evaluated node's depth

    def __post_init__(self):
        for name in ("n_expand", "k_early_stop", "d_exp", "max_simulations", "max_rounds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")


@dataclass
class SearchNode:
    id: int
    parent: Optional[int]
    depth: int
    action: Optional[Action] = None
    observation: Optional[Observation] = None
    w: float = 0.0
    n: int = 0
    terminal: bool = False
    valid_terminal: bool = False
    exhausted: bool = False
    prediction: Optional[tuple[str, tuple[str, ...]]] = None
    reward: Optional[float] = None  # this node's own evaluation score
    reward_samples: Optional[tuple] = None
    children: list[int] = field(default_factory=list)
    fruitless: int = 0
    expansions: int = 0
    timestamp: int = 0  # logical creation event, keeps traces reproducible


@dataclass
class TreeStats:
    node_count: int = 0
    max_depth: int = 0
    parse_failures: int = 0
    degraded_rewards: int = 0
    degraded_expansions: int = 0
    backprop_events: int = 0
    simulations: int = 0
    valid_terminals: int = 0


@dataclass(frozen=True)
class TerminalPrediction:
    node_id: int
    sparql: str
    answers: tuple[str, ...]
    mean_reward: float


@dataclass
class SearchResult:
    answer: tuple[str, ...]
    chosen_sparql: Optional[str]
    terminal_predictions: list[TerminalPrediction]
    tree_stats: TreeStats
    trace: list[dict]
    strategy: str


class SearchTree:
    def __init__(self, question: str):
        self.question = question
        self.nodes: list[SearchNode] = []
        self.stats = TreeStats()
        self._events = 0
        root = SearchNode(id=0, parent=None, depth=0)
        root.timestamp = self._tick()
        self.nodes.append(root)
        self.stats.node_count = 1

    def _tick(self) -> int:
        self._events += 1
        return self._events

    @property
    def root(self) -> SearchNode:
        return self.nodes[0]

    def add_child(self, parent: SearchNode, action: Action,
                  observation: Optional[Observation]) -> SearchNode:
        node = SearchNode(id=len(self.nodes), parent=parent.id,
                          depth=parent.depth + 1, action=action,
                          observation=observation)
        node.timestamp = self._tick()
        self.nodes.append(node)
        parent.children.append(node.id)
        self.stats.node_count += 1
        self.stats.max_depth = max(self.stats.max_depth, node.depth)
        return node

    def path_to(self, node: SearchNode) -> list[SearchNode]:
        path = []
        cursor: Optional[SearchNode] = node
        while cursor is not None:
            path.append(cursor)
            cursor = self.nodes[cursor.parent] if cursor.parent is not None else None
        path.reverse()
        return path

    def state_for(self, node: SearchNode) -> AgentState:
        history = [(x.action, x.observation) for x in self.path_to(node)[1:]]
        return AgentState(self.question, history)

    def branch_mean_reward(self, node: SearchNode) -> float:
        """Mean of the per-node evaluation scores along root -> node."""
        scores = [x.reward for x in self.path_to(node) if x.reward is not None]
        if not scores:
            return 0.0
        return sum(scores) / len(scores)


def uct(node: SearchNode, parent_visits: int) -> float:
    """w/n plus the sqrt(2 ln N / n) exploration term."""
    return node.w / node.n + math.sqrt(2.0 * math.log(parent_visits) / node.n)


def decay_increment(r: float, depth: int, gamma: float, d_exp: int) -> float:
    """Reward credit after the depth-based linear decay, clamped at zero."""
    return max(0.0, r * (1.0 - gamma * max(0, depth - d_exp)))


def _parent_visits(tree: SearchTree, node: SearchNode) -> int:
    if node.parent is None:
        return node.n
    return tree.nodes[node.parent].n


def selectable_nodes(tree: SearchTree, config: SearchConfig) -> list[SearchNode]:
    return [x for x in tree.nodes
            if not x.terminal and not x.exhausted and x.depth < config.max_rounds]


def select(tree: SearchTree, config: SearchConfig, rule: str = "mcts",
           rng: Optional[random.Random] = None) -> Optional[SearchNode]:
    """Pick the next node to expand, or None when the search is over.

    mcts: highest UCT (unvisited counts as infinite), ties to the shallower
    then earlier-created node. bfs/dfs: shallowest/deepest never-expanded
    node. random-select: uniform over selectable nodes.
    """
    candidates = selectable_nodes(tree, config)
    if rule in ("bfs", "dfs"):
        candidates = [x for x in candidates if x.expansions == 0]
    if not candidates:
        return None
    if rule == "mcts":
        def key(x: SearchNode):
            score = math.inf if x.n == 0 else uct(x, _parent_visits(tree, x))
            return (score, -x.depth, -x.id)
        return max(candidates, key=key)
    if rule == "bfs":
        return min(candidates, key=lambda x: (x.depth, x.id))
    if rule == "dfs":
        # deepest first; among equal depths the earliest-created, so a fresh
        # chain is followed before its later-created siblings
        return max(candidates, key=lambda x: (x.depth, -x.id))
    if rule == "random-select":
        if rng is None:
            raise ValueError("random-select needs a seeded generator")
        return candidates[rng.randrange(len(candidates))]
    raise ValueError(f"unknown selection rule {rule!r}")


def is_valid_terminal(tree: SearchTree, node: SearchNode) -> bool:
    """Done is valid only after an error-free, non-empty ExecuteSPARQL."""
    if node.action is None or node.action.tool != "Done":
        raise ValueError("terminal validity is defined for Done nodes")
    if node.parent is None:
        return False
    parent = tree.nodes[node.parent]
    if parent.action is None or parent.action.tool != "ExecuteSPARQL":
        return False
    obs = parent.observation
    return obs is not None and obs.error is None and bool(obs.answers)


def backpropagate(tree: SearchTree, node: SearchNode, r: float,
                  config: SearchConfig) -> None:
    """Visit and reward updates along root -> node with depth-decayed credit.

    The decay depth is each updated node's own depth by default; with
    decay_by_node_depth=False the evaluated node's depth is used for the
    whole path. Increments clamp at zero.
    """
    evaluated_depth = node.depth
    for x in tree.path_to(node):
        depth = x.depth if config.decay_by_node_depth else evaluated_depth
        x.n += 1
        x.w += decay_increment(r, depth, config.gamma, config.d_exp)
    tree.stats.backprop_events += 1


def expand(tree: SearchTree, node: SearchNode, agent_backend,
           config: SearchConfig, kb: KnowledgeBase) -> list[SearchNode]:
    """Propose up to n_expand actions, execute them, and add deduplicated
    children. Duplicates are keyed on (tool, canonical execution result).
    """
    node.expansions += 1
    state = tree.state_for(node)
    try:
        actions, failures = propose_actions(agent_backend, state, config.n_expand)
    except AgentTransportError:
        tree.stats.degraded_expansions += 1
        actions, failures = [], 0
    tree.stats.parse_failures += failures

    existing_fps = set()
    for cid in node.children:
        child = tree.nodes[cid]
        existing_fps.add(observation_fingerprint(child.action, child.observation))

    new_children: list[SearchNode] = []
    for action in actions:
        if action.tool == "Done":
            observation = None
        else:
            observation = run_action(kb, action)
        fp = observation_fingerprint(action, observation)
        if fp in existing_fps:
            continue
        existing_fps.add(fp)
        child = tree.add_child(node, action, observation)
        if action.tool == "Done":
            child.terminal = True
            child.valid_terminal = is_valid_terminal(tree, child)
            if child.valid_terminal:
                parent = tree.nodes[child.parent]
                child.prediction = (sparql_text(parent.action),
                                    parent.observation.answers)
        new_children.append(child)

    if new_children:
        node.fruitless = 0
    else:
        node.fruitless += 1
        if node.fruitless >= _EXHAUST_AFTER:
            node.exhausted = True
    return new_children


def vote(predictions: list[TerminalPrediction]) -> tuple[tuple[str, ...], Optional[str]]:
    """Most frequent answer set wins; ties go to the higher mean branch
    reward, then the earliest-created branch."""
    if not predictions:
        return (), None
    groups: dict[frozenset, list[TerminalPrediction]] = {}
    for pred in predictions:
        groups.setdefault(frozenset(pred.answers), []).append(pred)

    def group_key(item):
        _answers, preds = item
        mean_reward = sum(p.mean_reward for p in preds) / len(preds)
        earliest = min(p.node_id for p in preds)
        return (len(preds), mean_reward, -earliest)

    _answers, winners = max(groups.items(), key=group_key)
    best = max(winners, key=lambda p: (p.mean_reward, -p.node_id))
    return best.answers, best.sparql


def serialize_tree(tree: SearchTree, strategy: str,
                   question_id: Optional[str] = None) -> list[dict]:
    records = []
    for node in tree.nodes:
        obs = node.observation
        rec = {
            "question_id": question_id,
            "strategy": strategy,
            "node_id": node.id,
            "parent_id": node.parent,
            "depth": node.depth,
            "timestamp": node.timestamp,
            "tool": node.action.tool if node.action else None,
            "argument": node.action.argument if node.action else None,
            "thought": node.action.thought if node.action else None,
            "observation": None if obs is None else {
                "text": obs.text, "item_count": obs.item_count, "error": obs.error},
            "answers": list(obs.answers) if obs is not None and obs.answers else None,
            "w": node.w,
            "n": node.n,
            "terminal": node.terminal,
            "valid_terminal": node.valid_terminal,
            "exhausted": node.exhausted,
            "prediction": None if node.prediction is None else {
                "sparql": node.prediction[0], "answers": list(node.prediction[1])},
            "reward": node.reward,
            "reward_samples": None if node.reward_samples is None else [
                {"value": s.value} for s in node.reward_samples],
        }
        records.append(rec)
    return records


def run_search(question: str, kb: KnowledgeBase, agent_backend, reward_model,
               config: SearchConfig, strategy: str = "mcts",
               stop_when: Optional[Callable[[SearchTree, SearchNode], bool]] = None,
               question_id: Optional[str] = None) -> SearchResult:
    """Iterate select -> expand -> evaluate -> backpropagate until k valid
    terminals exist, the simulation budget runs out, or nothing is selectable.

    New non-terminal children are scored immediately; Done children
    backpropagate their parent's latest reward (the completed path changes
    no observations, so it earns no fresh evaluation).
    """
    if strategy not in STRATEGIES or strategy == "linear":
        raise ValueError(f"run_search does not handle strategy {strategy!r}")
    rule = {"mcts": "mcts", "bfs": "bfs", "dfs": "dfs",
            "random": "mcts", "random-select": "random-select"}[strategy]
    rng = random.Random(config.seed)
    tree = SearchTree(question)
    predictions: list[TerminalPrediction] = []
    stop = False

    for _sim in range(config.max_simulations):
        if tree.stats.valid_terminals >= config.k_early_stop or stop:
            break
        node = select(tree, config, rule=rule, rng=rng)
        if node is None:
            break
        tree.stats.simulations += 1
        children = expand(tree, node, agent_backend, config, kb)
        for child in children:
            if child.terminal:
                parent = tree.nodes[child.parent]
                r = parent.reward if parent.reward is not None else 0.0
                backpropagate(tree, child, r, config)
                if child.valid_terminal:
                    tree.stats.valid_terminals += 1
                    predictions.append(TerminalPrediction(
                        node_id=child.id,
                        sparql=child.prediction[0],
                        answers=child.prediction[1],
                        mean_reward=tree.branch_mean_reward(child)))
                    if stop_when is not None and stop_when(tree, child):
                        stop = True
            else:
                outcome = reward_model.score(tree.state_for(child))
                child.reward = outcome.value
                child.reward_samples = outcome.samples or None
                if outcome.degraded:
                    tree.stats.degraded_rewards += 1
                backpropagate(tree, child, outcome.value, config)

    answer, chosen = vote(predictions)
    return SearchResult(
        answer=answer,
        chosen_sparql=chosen,
        terminal_predictions=predictions,
        tree_stats=tree.stats,
        trace=serialize_tree(tree, strategy, question_id),
        strategy=strategy,
    )
