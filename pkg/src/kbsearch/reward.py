"""Prompt-based scoring of intermediate search states.

Rule mode sends the task description plus element-identification and
sub-problem guidelines; direct mode sends only tool descriptions and the
format specification. Random mode never contacts a backend. Scores are the
mean of n_r sampled "Score: <0-10>" completions, normalized to [0, 1].
"""

from __future__ import annotations

import csv
import random
import re
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .agent import AgentState, AgentTransportError, render_action
from .assets import PromptAssets, load_prompt_assets

REWARD_MODES = ("rule", "direct", "random")
NEUTRAL_REWARD = 0.5


@dataclass(frozen=True)
class RewardConfig:
    mode: str = "rule"
    n_r: int = 10
    temperature: float = 0.7
    prompt_dir: Optional[str] = None

    def __post_init__(self):
        if self.mode not in REWARD_MODES:
            raise ValueError(f"unknown reward mode {self.mode!r}")
        if self.n_r < 1:
            raise ValueError("n_r must be positive")


@dataclass(frozen=True)
class RewardSample:
    raw: str
    value: Optional[float]  # None marks a parse failure


@dataclass(frozen=True)
class ScoreOutcome:
    value: float
    samples: tuple[RewardSample, ...] = ()
    degraded: bool = False


_SCORE_RE = re.compile(r"score\s*:\s*(\d+)", re.IGNORECASE)


def parse_score(text: str) -> Optional[float]:
    """Last "Score: <0..10>" occurrence normalized to [0,1]; None on failure."""
    matches = _SCORE_RE.findall(text)
    if not matches:
        return None
    value = int(matches[-1])
    if not 0 <= value <= 10:
        return None
    return value / 10.0


def render_state_transcript(state: AgentState) -> str:
    lines = [f"Question: {state.question}"]
    for action, observation in state.history:
        lines.append(render_action(action))
        if observation is not None:
            lines.append(f"Observation:\n{observation.text}")
    return "\n".join(lines)


def build_eval_prompt(state: AgentState, mode: str,
                      assets: PromptAssets) -> list[dict[str, str]]:
    """Deterministic evaluation prompt; rule and direct modes differ only here."""
    if mode == "rule":
        system = "\n\n".join([assets.eval_task, assets.eval_guidelines,
                              assets.eval_format, "Examples:\n" + assets.eval_exemplars])
    elif mode == "direct":
        system = "\n\n".join([assets.tool_docs, assets.eval_format])
    else:
        raise ValueError(f"no evaluation prompt for mode {mode!r}")
    user = ("Evaluate the current state of the attempt below.\n\n"
            + render_state_transcript(state))
    return [{"role": "system", "content": system},
            {"role": "user", "content": user}]


def score_state(backend, config: RewardConfig, state: AgentState,
                rng: Optional[random.Random] = None,
                assets: Optional[PromptAssets] = None) -> ScoreOutcome:
    """Draw n_r samples and average the parsed values.

    Total parse failure or a transport failure degrades to the neutral 0.5.
    """
    if config.mode == "random":
        if rng is None:
            raise ValueError("random mode needs a seeded generator")
        return ScoreOutcome(rng.random())
    if assets is None:
        assets = load_prompt_assets(config.prompt_dir)
    messages = build_eval_prompt(state, config.mode, assets)
    try:
        completions = backend.complete(messages, n=config.n_r,
                                       temperature=config.temperature)
    except AgentTransportError:
        return ScoreOutcome(NEUTRAL_REWARD, degraded=True)
    samples = tuple(RewardSample(raw, parse_score(raw)) for raw in completions)
    values = [s.value for s in samples if s.value is not None]
    if not values:
        return ScoreOutcome(NEUTRAL_REWARD, samples=samples, degraded=True)
    return ScoreOutcome(sum(values) / len(values), samples=samples)


class PromptRewardModel:
    """Reward model backed by a chat-completion backend."""

    def __init__(self, backend, config: RewardConfig,
                 assets: Optional[PromptAssets] = None):
        if config.mode == "random":
            raise ValueError("use RandomRewardModel for random mode")
        self.backend = backend
        self.config = config
        self.assets = assets or load_prompt_assets(config.prompt_dir)

    def score(self, state: AgentState) -> ScoreOutcome:
        return score_state(self.backend, self.config, state, assets=self.assets)


class RandomRewardModel:
    """Uniform scores from a seeded generator; reproducible, backend-free."""

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def score(self, state: AgentState) -> ScoreOutcome:
        return ScoreOutcome(self.rng.random())


class NullRewardModel:
    """Zero reward; used by strategies that ignore node values (BFS/DFS)."""

    def score(self, state: AgentState) -> ScoreOutcome:
        return ScoreOutcome(0.0)


class FunctionRewardModel:
    """Scores states with an arbitrary callable; handy for scripted fixtures."""

    def __init__(self, fn):
        self.fn = fn

    def score(self, state: AgentState) -> ScoreOutcome:
        return ScoreOutcome(float(self.fn(state)))


@dataclass
class StabilityRow:
    depth: int
    node_count: int
    mean_std: float


def score_stability(entries: Iterable[tuple[int, Sequence[float]]]
                    ) -> tuple[list[StabilityRow], int]:
    """Per-node population standard deviation, averaged per depth.

    `entries` holds (depth, parsed sample values) per node. Nodes with fewer
    than two parsed samples are excluded and counted in the second return
    value.
    """
    by_depth: dict[int, list[float]] = {}
    excluded = 0
    for depth, values in entries:
        values = list(values)
        if len(values) < 2:
            excluded += 1
            continue
        by_depth.setdefault(depth, []).append(statistics.pstdev(values))
    rows = [StabilityRow(depth, len(stds), sum(stds) / len(stds))
            for depth, stds in sorted(by_depth.items())]
    return rows, excluded


def write_stability_csv(rows: list[StabilityRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["depth", "node_count", "mean_std"])
        for row in rows:
            writer.writerow([row.depth, row.node_count, f"{row.mean_std:.6f}"])
