import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from agora.agents import AgentProfile, TaskInstance
from agora.broker import (
    NEUTRAL, BrokerParams, BrokerState, ScoreContext, record_reward, select_initial_agent, synergy_value,
    task_distance, ucb1_select, utility_score,
)
from agora.market import MarketState, run_market_phase, strategic_uncertainty
from agora.uncertainty import UncertaintyDecomposition, UncertaintyVector

from test_market import OPEN, agent

MEAN_NEUTRAL = BrokerParams(0.0, 1.0, 0.0, 0.0, sample_posterior=False)


def task(u=(0.5, 0.5, 0.5), tid="t0", reward=1.0):
    return TaskInstance(tid, UncertaintyDecomposition(UncertaintyVector(*u), UncertaintyVector.zeros()), (), reward)


def test_record_reward_examples():
    pool = [AgentProfile("a", 1.0)]
    s = record_reward(BrokerState.for_pool(pool), "a", 1, 3)
    assert s.posteriors["a"] == [2.0, 1.0] and s.posterior_mean("a") == pytest.approx(2 / 3)
    assert s.last_update["a"] == 3
    assert record_reward(BrokerState.for_pool(pool), "a", 0, 0).posteriors["a"] == [1.0, 2.0]
    s = BrokerState.for_pool(pool)
    for t in range(10):
        record_reward(s, "a", 1, t)
    for t in range(5):
        record_reward(s, "a", 0, t)
    assert s.posteriors["a"] == [11.0, 6.0] and s.posterior_mean("a") == pytest.approx(11 / 17)


def test_record_reward_errors():
    s = BrokerState.for_pool([AgentProfile("a", 1.0)])
    with pytest.raises(KeyError):
        record_reward(s, "zzz", 1, 0)
    with pytest.raises(ValueError):
        record_reward(s, "a", 2, 0)


@given(st.lists(st.integers(0, 1), max_size=40))
def test_posterior_update_commutes(rewards):
    pool = [AgentProfile("a", 1.0)]
    shuffled = list(rewards)
    random.Random(len(rewards)).shuffle(shuffled)
    s1, s2 = BrokerState.for_pool(pool), BrokerState.for_pool(pool)
    for r in rewards:
        record_reward(s1, "a", r, 0)
    for r in shuffled:
        record_reward(s2, "a", r, 0)
    assert s1.posteriors == s2.posteriors == {"a": [1.0 + sum(rewards), 1.0 + len(rewards) - sum(rewards)]}


def test_task_distance_examples():
    v = (0.2, 0.3, 0.5)
    assert task_distance(v, v, "cosine_dissimilarity") == pytest.approx(0.0, abs=1e-15)
    assert task_distance(v, v, "normalized_euclidean", pool_max=1.0) == 0.0
    assert task_distance((1, 0), (0, 1), "cosine_dissimilarity") == pytest.approx(1.0)
    far = task_distance((1, 0), (0, 1), "normalized_euclidean", pool_max=math.sqrt(2))
    assert 1.0 - 1e-8 < far < 1.0
    assert task_distance((0, 0), (0, 1), "cosine_dissimilarity") == 1.0


def test_task_distance_errors():
    with pytest.raises(ValueError):
        task_distance((1, 0), (1, 0, 0), "cosine_dissimilarity")
    with pytest.raises(ValueError):
        task_distance((1, 0), (1, 0), "normalized_euclidean")
    with pytest.raises(ValueError):
        task_distance((1, 0), (1, 0), "manhattan")


def test_strategic_uncertainty_examples():
    state = MarketState.initial([agent("a1", 3.0), agent("a2", 1.0, 0.5)], "a1", (1.0, 0.0, 0.0))
    assert strategic_uncertainty("a2", state, OPEN) == pytest.approx(2.5, abs=1e-12)
    final = run_market_phase(state, OPEN).state
    assert strategic_uncertainty("a1", final, OPEN) == 0.0
    assert strategic_uncertainty("a2", final, OPEN) == 0.0


def test_strategic_uncertainty_expensive_non_expert_never_receives():
    agents = [agent("cheap", 1.0, 0.5), agent("pricey", 4.0, 0.0)]
    state = MarketState.initial(agents, "cheap", (1.0, 0.0, 0.0))
    assert strategic_uncertainty("pricey", state, OPEN) == 0.0


def test_synergy_examples():
    same = [AgentProfile("a", 1.0, (0.5, 0.5, 0.5)), AgentProfile("b", 1.0, (0.5, 0.5, 0.5))]
    assert synergy_value("a", same, BrokerState.for_pool(same)) == 0.0
    assert synergy_value("a", same[:1], BrokerState.for_pool(same[:1])) == 0.0
    pool = [AgentProfile("s", 1.0, (1, 0, 0)), AgentProfile("j", 1.0, (0, 1, 0))]
    assert synergy_value("s", pool, BrokerState.for_pool(pool)) == pytest.approx(0.5)


def _score(params, t=task(), pool=None, state=None, tick=0, success_rate=0.7):
    pool = pool or [AgentProfile("a", 1.0, (0.3, 0.6, 0.1)), AgentProfile("b", 2.0, (0.9, 0.1, 0.4))]
    state = state or BrokerState.for_pool(pool)
    return utility_score("a", t, state, ScoreContext(pool), params, tick, success_rate=success_rate)


def test_factor_neutrality():
    enr = 0.7 * 1.0 - 1.0 * 0.5
    assert _score(NEUTRAL) == pytest.approx(enr, abs=1e-12)


def test_time_decay_example():
    pool = [AgentProfile("a", 1.0), AgentProfile("b", 1.0)]
    params = BrokerParams(0.0, 0.99, 0.0, 0.0)
    got = _score(params, pool=pool, tick=10)
    assert got == pytest.approx((0.7 - 0.5) * 0.99 ** 10, abs=1e-12)
    assert 0.99 ** 10 == pytest.approx(0.9044, abs=1e-4)


def test_negative_enr_amplified_by_strategic_factor():
    # the only pool mate absorbs perceptual load cheaply, so the strategic index is positive
    pool = [AgentProfile("a", 3.0, capacity=(5, 5, 5)), AgentProfile("b", 0.5, (0.9, 0.9, 0.9), (5, 5, 5))]
    params = BrokerParams(0.0, 1.0, 0.0, 1.2)
    enr = _score(NEUTRAL, pool=pool, success_rate=0.1)
    assert enr < 0
    assert _score(params, pool=pool, success_rate=0.1) < enr


def test_sampling_mode_requires_generator():
    with pytest.raises(ValueError):
        _score(BrokerParams(), success_rate=None)


def test_singleton_pool_selects_only_agent():
    pool = [AgentProfile("solo", 1.0)]
    rng = np.random.default_rng(0)
    assert select_initial_agent(task(), BrokerState.for_pool(pool), ScoreContext(pool), BrokerParams(), 0, rng) == "solo"


def test_empty_pool_rejected():
    with pytest.raises(ValueError):
        select_initial_agent(task(), BrokerState.for_pool([]), ScoreContext([]), MEAN_NEUTRAL, 0)


def test_dominant_agent_selected():
    pool = [AgentProfile("best", 0.01), AgentProfile("x", 5.0), AgentProfile("y", 5.0)]
    state = BrokerState.for_pool(pool)
    state.posteriors = {"best": [100.0, 1.0], "x": [1.0, 100.0], "y": [1.0, 100.0]}
    picks = [select_initial_agent(task(), state, ScoreContext(pool), NEUTRAL, 0, np.random.default_rng(s))
             for s in range(100)]
    assert picks.count("best") >= 99


def test_tie_goes_to_smallest_id():
    pool = [AgentProfile("b", 1.0), AgentProfile("a", 1.0)]
    assert select_initial_agent(task(), BrokerState.for_pool(pool), ScoreContext(pool), MEAN_NEUTRAL, 0) == "a"


def test_generator_advances_once_per_agent():
    pool = [AgentProfile(f"a{i}", 1.0) for i in range(4)]
    rng, ref = np.random.default_rng(9), np.random.default_rng(9)
    select_initial_agent(task(), BrokerState.for_pool(pool), ScoreContext(pool), NEUTRAL, 0, rng)
    for _ in pool:
        ref.beta(1.0, 1.0)
    assert rng.random() == ref.random()


@given(st.floats(0.01, 100.0))
def test_argmax_invariant_to_score_scaling(scale):
    # scaling reward and every cost by the same constant scales every ENR by it
    pool = [AgentProfile("a", 0.4), AgentProfile("b", 0.9), AgentProfile("c", 0.2)]
    state = BrokerState.for_pool(pool)
    state.posteriors = {"a": [5.0, 2.0], "b": [9.0, 1.0], "c": [1.0, 3.0]}
    scaled = [AgentProfile(a.id, a.unit_cost * scale) for a in pool]
    base = select_initial_agent(task(), state, ScoreContext(pool), MEAN_NEUTRAL, 0)
    t2 = task(reward=scale)
    assert select_initial_agent(t2, state, ScoreContext(scaled), MEAN_NEUTRAL, 0) == base


def test_broker_state_json_round_trip():
    pool = [AgentProfile("a", 1.0, (0.1, 0.2, 0.3)), AgentProfile("b", 1.0)]
    s = record_reward(BrokerState.for_pool(pool), "a", 1, 4)
    back = BrokerState.from_json(s.to_json())
    assert back == s
    with pytest.raises(ValueError):
        BrokerState.from_json('{"schema_version": 99}')


def test_ucb1_pulls_unpulled_first_then_exploits():
    pool = [AgentProfile("a", 1.0), AgentProfile("b", 1.0)]
    s = BrokerState.for_pool(pool)
    assert ucb1_select(s) == "a"
    record_reward(s, "a", 1, 0)
    assert ucb1_select(s) == "b"
    for _ in range(50):
        record_reward(s, "a", 1, 0)
    for _ in range(20):
        record_reward(s, "b", 0, 0)
    assert ucb1_select(s) == "a"
