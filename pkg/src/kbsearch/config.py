"""Experiment configuration: a declarative JSON file whose keys mirror the
search hyperparameter table, with the defaults preloaded."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Optional

from .chat_api import EndpointConfig
from .mcts import SearchConfig
from .reward import REWARD_MODES, RewardConfig

DEFAULTS = {
    "early_stop_k": 5,
    "max_simulations": 50,
    "depth_penalty": 0.1,
    "max_preferred_depth": 5,
    "max_rounds": 12,
    "n_agent": 5,
    "n_reward": 10,
    "temperature_agent": 1.0,
    "temperature_reward": 0.7,
}

_OPTIONAL_KEYS = {
    "seed": int,
    "workers": int,
    "reward_mode": str,
    "strategy": str,
    "linear_runs": int,
    "annotate_f1_threshold": float,
    "prompt_dir": str,
    "decay_by_node_depth": bool,
    "agent_endpoint": dict,
    "reward_endpoint": dict,
}

_ENDPOINT_KEYS = {"base_url": str, "model": str, "api_key_env": str, "timeout_s": (int, float)}


@dataclass
class ExperimentConfig:
    early_stop_k: int = 5
    max_simulations: int = 50
    depth_penalty: float = 0.1
    max_preferred_depth: int = 5
    max_rounds: int = 12
    n_agent: int = 5
    n_reward: int = 10
    temperature_agent: float = 1.0
    temperature_reward: float = 0.7
    seed: int = 0
    workers: int = 1
    reward_mode: str = "rule"
    strategy: str = "mcts"
    linear_runs: int = 5
    annotate_f1_threshold: float = 0.67
    prompt_dir: Optional[str] = None
    decay_by_node_depth: bool = True
    agent_endpoint: Optional[dict] = None
    reward_endpoint: Optional[dict] = None

    def search_config(self, seed: Optional[int] = None) -> SearchConfig:
        return SearchConfig(
            n_expand=self.n_agent,
            k_early_stop=self.early_stop_k,
            gamma=self.depth_penalty,
            d_exp=self.max_preferred_depth,
            max_simulations=self.max_simulations,
            max_rounds=self.max_rounds,
            seed=self.seed if seed is None else seed,
            decay_by_node_depth=self.decay_by_node_depth,
        )

    def reward_config(self) -> RewardConfig:
        return RewardConfig(mode=self.reward_mode, n_r=self.n_reward,
                            temperature=self.temperature_reward,
                            prompt_dir=self.prompt_dir)

    def endpoint(self, which: str) -> Optional[EndpointConfig]:
        raw = self.agent_endpoint if which == "agent" else self.reward_endpoint
        if raw is None:
            return None
        return EndpointConfig(
            base_url=raw["base_url"],
            model=raw["model"],
            api_key_env=raw.get("api_key_env", "KBSEARCH_API_KEY"),
            timeout_s=float(raw.get("timeout_s", 120.0)),
        )

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _validate_raw(raw: dict) -> list[str]:
    errors = []
    for key, value in raw.items():
        if key in DEFAULTS:
            expected = type(DEFAULTS[key])
            if expected is float:
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    errors.append(f"{key}: expected a number, got {value!r}")
            elif not isinstance(value, int) or isinstance(value, bool):
                errors.append(f"{key}: expected an integer, got {value!r}")
        elif key in _OPTIONAL_KEYS:
            expected = _OPTIONAL_KEYS[key]
            if expected is bool:
                if not isinstance(value, bool):
                    errors.append(f"{key}: expected a boolean, got {value!r}")
            elif expected is float:
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    errors.append(f"{key}: expected a number, got {value!r}")
            elif not isinstance(value, expected):
                errors.append(f"{key}: expected {expected.__name__}, got {value!r}")
        else:
            errors.append(f"unknown config key {key!r}")

    for which in ("agent_endpoint", "reward_endpoint"):
        endpoint = raw.get(which)
        if endpoint is None:
            continue
        if not isinstance(endpoint, dict):
            continue  # already reported above
        for req in ("base_url", "model"):
            if req not in endpoint:
                errors.append(f"{which}: missing required key {req!r}")
        for key, value in endpoint.items():
            if key not in _ENDPOINT_KEYS:
                errors.append(f"{which}: unknown key {key!r}")
            elif not isinstance(value, _ENDPOINT_KEYS[key]):
                errors.append(f"{which}.{key}: bad value {value!r}")

    for key in ("early_stop_k", "max_simulations", "max_preferred_depth",
                "max_rounds", "n_agent", "n_reward"):
        value = raw.get(key)
        if isinstance(value, int) and not isinstance(value, bool) and value < 1:
            errors.append(f"{key}: must be positive")
    penalty = raw.get("depth_penalty")
    if isinstance(penalty, (int, float)) and not 0.0 <= penalty < 1.0:
        errors.append("depth_penalty: must lie in [0, 1)")
    mode = raw.get("reward_mode")
    if isinstance(mode, str) and mode not in REWARD_MODES:
        errors.append(f"reward_mode: must be one of {REWARD_MODES}")
    workers = raw.get("workers")
    if isinstance(workers, int) and not isinstance(workers, bool) and workers < 1:
        errors.append("workers: must be positive")
    return errors


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def load_config(path: Optional[str] = None,
                overrides: Optional[dict] = None) -> ExperimentConfig:
    """Defaults, then the config file, then CLI overrides. All validation
    errors are collected and reported together."""
    raw: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError([f"{path}: invalid JSON ({exc.msg})"]) from None
        if not isinstance(raw, dict):
            raise ConfigError([f"{path}: config must be a JSON object"])
    if overrides:
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    errors = _validate_raw(raw)
    if errors:
        raise ConfigError(errors)
    merged = {**DEFAULTS}
    merged.update(raw)
    return ExperimentConfig(**merged)
