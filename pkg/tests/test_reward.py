import pytest

from kbsearch.agent import AgentState, AgentTransportError, make_action
from kbsearch.assets import AssetError, load_prompt_assets
from kbsearch.reward import (
    NEUTRAL_REWARD,
    RandomRewardModel,
    RewardConfig,
    build_eval_prompt,
    parse_score,
    score_state,
    score_stability,
)
from kbsearch.tools import Observation


class _ListBackend:
    def __init__(self, completions):
        self.completions = completions
        self.calls = []

    def complete(self, messages, n, temperature):
        self.calls.append((n, temperature))
        return self.completions[:n]


class _DownBackend:
    def complete(self, messages, n, temperature):
        raise AgentTransportError("down")


def _state(turns=0):
    history = []
    for i in range(turns):
        action = make_action("SearchNodes", f"thing {i}", thought=f"step {i}")
        history.append((action, Observation(text=f"1. result {i}", item_count=1)))
    return AgentState("what is the thing?", history)


def test_parse_score_cases():
    assert parse_score("...Score: 7") == 0.7
    assert parse_score("Score: 11") is None
    assert parse_score("Score: 3 ... Score: 9") == 0.9
    assert parse_score("no score anywhere") is None
    assert parse_score("Score: 0") == 0.0
    assert parse_score("Score: 10") == 1.0
    assert parse_score("score:5") == 0.5


def test_rule_vs_direct_prompt(prompt_assets):
    state = _state(1)
    rule = build_eval_prompt(state, "rule", prompt_assets)
    direct = build_eval_prompt(state, "direct", prompt_assets)
    assert prompt_assets.eval_guidelines.strip()[:40] in rule[0]["content"]
    assert prompt_assets.eval_guidelines.strip()[:40] not in direct[0]["content"]
    assert prompt_assets.tool_docs.strip()[:40] in direct[0]["content"]
    # deterministic: same state, same mode, byte-identical
    assert build_eval_prompt(state, "rule", prompt_assets) == rule


def test_prompt_embeds_all_turns_verbatim(prompt_assets):
    state = _state(3)
    prompt = build_eval_prompt(state, "rule", prompt_assets)
    user = prompt[-1]["content"]
    for i in range(3):
        assert f"step {i}" in user
        assert f"1. result {i}" in user


def test_score_state_mean():
    config = RewardConfig(mode="rule", n_r=10)
    backend = _ListBackend(["Score: 6"] * 10)
    outcome = score_state(backend, config, _state(), assets=load_prompt_assets())
    assert outcome.value == pytest.approx(0.6)
    assert not outcome.degraded

    config2 = RewardConfig(mode="rule", n_r=2)
    backend2 = _ListBackend(["Score: 4", "Score: 8"])
    outcome2 = score_state(backend2, config2, _state(), assets=load_prompt_assets())
    assert outcome2.value == pytest.approx(0.6)
    assert backend2.calls == [(2, 0.7)]


def test_score_state_partial_and_total_failure():
    config = RewardConfig(mode="rule", n_r=3)
    backend = _ListBackend(["Score: 4", "nope", "Score: 8"])
    outcome = score_state(backend, config, _state(), assets=load_prompt_assets())
    assert outcome.value == pytest.approx(0.6)
    assert [s.value for s in outcome.samples] == [0.4, None, 0.8]

    all_bad = _ListBackend(["junk"] * 3)
    degraded = score_state(all_bad, config, _state(), assets=load_prompt_assets())
    assert degraded.value == NEUTRAL_REWARD and degraded.degraded


def test_transport_failure_degrades():
    config = RewardConfig(mode="rule", n_r=3)
    outcome = score_state(_DownBackend(), config, _state(), assets=load_prompt_assets())
    assert outcome.value == NEUTRAL_REWARD and outcome.degraded


def test_random_mode_is_seeded_and_offline():
    model_a = RandomRewardModel(seed=11)
    model_b = RandomRewardModel(seed=11)
    values_a = [model_a.score(_state()).value for _ in range(5)]
    values_b = [model_b.score(_state()).value for _ in range(5)]
    assert values_a == values_b
    assert all(0.0 <= v <= 1.0 for v in values_a)
    with pytest.raises(ValueError):
        score_state(None, RewardConfig(mode="random"), _state())


def test_score_always_in_unit_interval():
    config = RewardConfig(mode="rule", n_r=4)
    backend = _ListBackend(["Score: 0", "Score: 10", "Score: 10", "Score: 0"])
    outcome = score_state(backend, config, _state(), assets=load_prompt_assets())
    assert 0.0 <= outcome.value <= 1.0


def test_missing_prompt_assets(tmp_path):
    with pytest.raises(AssetError):
        load_prompt_assets(str(tmp_path))


def test_score_stability_tables():
    rows, excluded = score_stability([(1, [0.5, 0.5, 0.5])])
    assert rows[0].mean_std == 0.0 and excluded == 0

    rows, _ = score_stability([(2, [0.0, 1.0])])
    assert rows[0].mean_std == pytest.approx(0.5)

    # two depth-1 nodes with stds 0.1 and 0.3 -> mean 0.2
    rows, _ = score_stability([(1, [0.4, 0.6]), (1, [0.2, 0.8])])
    assert rows[0].depth == 1
    assert rows[0].node_count == 2
    assert rows[0].mean_std == pytest.approx(0.2)

    rows, excluded = score_stability([(1, [0.9]), (2, [0.1, 0.2, 0.3])])
    assert excluded == 1
    assert [r.depth for r in rows] == [2]


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(mode="psychic")
    with pytest.raises(ValueError):
        RewardConfig(n_r=0)
