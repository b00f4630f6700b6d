"""Market-aware Thompson Sampling: pick the agent that first takes on a task.

A candidate's score starts from its net reward: a success rate drawn from
its Beta posterior (or the posterior mean in deterministic mode) times the
task's reward, minus what the candidate would pay to process the task. Four
multiplicative factors then adjust it. The score decays exponentially with
agent-task distance and geometrically with ticks since the agent's last
reward. Synergy with teammates and the agent's strategic uncertainty each
raise it through a ``(1 + value) ** exponent`` factor. :data:`NEUTRAL` switches
all four off.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .agents import AgentProfile, TaskInstance, processing_cost
from .market import MarketParams, MarketState, strategic_uncertainty
from .uncertainty import DEFAULT_WEIGHTS, DimensionWeights

SCHEMA_VERSION = 1
DISTANCE_EPS = 1e-9
METRICS = ("normalized_euclidean", "cosine_dissimilarity")


@dataclass(frozen=True)
class BrokerParams:
    lambda_dist: float = 0.2
    gamma_decay: float = 0.99
    eta_synergy: float = 0.8
    omega_strategic: float = 1.2
    distance_metric: str = "normalized_euclidean"
    sample_posterior: bool = True
    prior: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.lambda_dist < 0 or self.eta_synergy < 0 or self.omega_strategic < 0:
            raise ValueError("distance, synergy and strategic exponents must be >= 0")
        if not (0.0 < self.gamma_decay <= 1.0):
            raise ValueError("gamma_decay must lie in (0, 1]")
        if self.distance_metric not in METRICS:
            raise ValueError(f"distance_metric must be one of {METRICS}")
        if min(self.prior) <= 0:
            raise ValueError("Beta prior parameters must be > 0")


NEUTRAL = BrokerParams(lambda_dist=0.0, gamma_decay=1.0, eta_synergy=0.0, omega_strategic=0.0)


@dataclass
class BrokerState:
    posteriors: dict[str, list[float]]
    last_update: dict[str, int]
    feature_vectors: dict[str, tuple[float, ...]] = field(default_factory=dict)
    round: int = 0

    @classmethod
    def for_pool(cls, pool: Sequence[AgentProfile], prior: tuple[float, float] = (1.0, 1.0)) -> "BrokerState":
        return cls(
            posteriors={a.id: [float(prior[0]), float(prior[1])] for a in pool},
            last_update={a.id: 0 for a in pool},
            feature_vectors={a.id: tuple(a.expertise) for a in pool},
        )

    def posterior_mean(self, agent_id: str) -> float:
        a, b = self.posteriors[agent_id]
        return a / (a + b)

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "posteriors": {k: list(v) for k, v in sorted(self.posteriors.items())},
            "last_update": dict(sorted(self.last_update.items())),
            "feature_vectors": {k: list(v) for k, v in sorted(self.feature_vectors.items())},
            "round": self.round,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BrokerState":
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported broker state schema {doc.get('schema_version')!r}")
        return cls(
            posteriors={k: [float(v[0]), float(v[1])] for k, v in doc["posteriors"].items()},
            last_update={k: int(v) for k, v in doc["last_update"].items()},
            feature_vectors={k: tuple(float(x) for x in v) for k, v in doc.get("feature_vectors", {}).items()},
            round=int(doc["round"]),
        )


def record_reward(state: BrokerState, agent_id: str, reward: int, tick: int) -> BrokerState:
    """Beta update in place: success bumps alpha, failure bumps beta."""
    if agent_id not in state.posteriors:
        raise KeyError(f"unknown agent {agent_id!r}")
    if reward not in (0, 1):
        raise ValueError("reward must be 0 or 1")
    post = state.posteriors[agent_id]
    if reward:
        post[0] += 1.0
    else:
        post[1] += 1.0
    state.last_update[agent_id] = int(tick)
    state.round += 1
    return state


def task_features(task: TaskInstance) -> tuple[float, float, float]:
    """Epistemic composition of the task, L1-normalised; zero task gives the zero vector."""
    u = task.epistemic.as_tuple()
    norm = sum(u)
    if norm <= 0.0:
        return (0.0, 0.0, 0.0)
    return tuple(x / norm for x in u)


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """0 when either vector is zero."""
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


def task_distance(
    agent_features: Sequence[float],
    task_feats: Sequence[float],
    metric: str = "normalized_euclidean",
    pool_max: float | None = None,
) -> float:
    """Agent-task dissimilarity in [0, 1].

    Normalised Euclidean divides by the largest distance in the pool (pass it
    as ``pool_max``). Cosine dissimilarity treats a zero vector as maximally
    dissimilar.
    """
    if len(agent_features) != len(task_feats):
        raise ValueError("feature vectors must have equal length")
    if metric == "normalized_euclidean":
        if pool_max is None:
            raise ValueError("normalized_euclidean needs the pool's max distance")
        d = math.dist(agent_features, task_feats) / (pool_max + DISTANCE_EPS)
    elif metric == "cosine_dissimilarity":
        if not any(agent_features) or not any(task_feats):
            return 1.0
        d = 1.0 - cosine_similarity(agent_features, task_feats)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return min(1.0, max(0.0, d))


def synergy_value(agent_id: str, pool: Sequence[AgentProfile], broker_state: BrokerState) -> float:
    """Mean complementarity-times-potential over teammates.

    Complementarity is ``1 - cosine`` of expertise vectors (0 for identical
    vectors); a teammate's potential is its posterior mean.
    """
    if len(pool) < 2:
        return 0.0
    me = next(a for a in pool if a.id == agent_id)
    total = 0.0
    for mate in pool:
        if mate.id == agent_id:
            continue
        comp = 0.0 if mate.expertise == me.expertise else 1.0 - cosine_similarity(me.expertise, mate.expertise)
        total += comp * broker_state.posterior_mean(mate.id)
    return total / (len(pool) - 1)


def _pool_max_distance(pool: Sequence[AgentProfile], broker_state: BrokerState, feats: Sequence[float]) -> float:
    return max(math.dist(broker_state.feature_vectors.get(a.id, a.expertise), feats) for a in pool)


@dataclass
class ScoreContext:
    """Everything the utility needs besides the candidate itself."""

    pool: Sequence[AgentProfile]
    weights: DimensionWeights = DEFAULT_WEIGHTS
    market_params: MarketParams = field(default_factory=MarketParams)
    market_state: MarketState | None = None
    kernel_backend: str | None = None

    def strategic(self, agent_id: str, task: TaskInstance) -> float:
        state = self.market_state
        if state is None:
            # Candidate as handler, as in the initial allocation.
            state = MarketState.initial(self.pool, agent_id, task.epistemic.as_tuple())
        return strategic_uncertainty(agent_id, state, self.market_params, backend=self.kernel_backend)


def utility_score(
    agent_id: str,
    task: TaskInstance,
    broker_state: BrokerState,
    context: ScoreContext,
    params: BrokerParams,
    tick: int,
    *,
    success_rate: float | None = None,
    rng: np.random.Generator | None = None,
    pool_max: float | None = None,
) -> float:
    profile = next((a for a in context.pool if a.id == agent_id), None)
    if profile is None or agent_id not in broker_state.posteriors:
        raise KeyError(f"unknown agent {agent_id!r}")
    if success_rate is None:
        wins, losses = broker_state.posteriors[agent_id]
        if params.sample_posterior:
            if rng is None:
                raise ValueError("posterior sampling needs a generator")
            success_rate = float(rng.beta(wins, losses))
        else:
            success_rate = wins / (wins + losses)
    cost = processing_cost(profile, task.epistemic, context.weights)
    score = success_rate * task.max_reward - cost

    if params.lambda_dist != 0.0:
        feats = task_features(task)
        if pool_max is None and params.distance_metric == "normalized_euclidean":
            pool_max = _pool_max_distance(context.pool, broker_state, feats)
        agent_feats = broker_state.feature_vectors.get(agent_id, profile.expertise)
        score *= math.exp(-params.lambda_dist * task_distance(agent_feats, feats, params.distance_metric, pool_max))
    if params.gamma_decay != 1.0:
        score *= params.gamma_decay ** (tick - broker_state.last_update[agent_id])
    if params.eta_synergy != 0.0:
        score *= (1.0 + synergy_value(agent_id, context.pool, broker_state)) ** params.eta_synergy
    if params.omega_strategic != 0.0:
        score *= (1.0 + context.strategic(agent_id, task)) ** params.omega_strategic
    return score


def select_initial_agent(
    task: TaskInstance,
    broker_state: BrokerState,
    context: ScoreContext,
    params: BrokerParams,
    tick: int,
    rng: np.random.Generator | None = None,
) -> str:
    """Argmax of the utility over the pool; ties go to the smallest id.

    In sampling mode the generator is drawn exactly once per agent, in id
    order.
    """
    pool = sorted(context.pool, key=lambda a: a.id)
    if not pool:
        raise ValueError("empty agent pool")
    if len(pool) == 1:
        if params.sample_posterior and rng is not None:
            rng.beta(*broker_state.posteriors[pool[0].id])
        return pool[0].id
    pool_max = None
    if params.lambda_dist != 0.0 and params.distance_metric == "normalized_euclidean":
        pool_max = _pool_max_distance(pool, broker_state, task_features(task))
    best_id, best_score = None, -math.inf
    for agent in pool:
        score = utility_score(agent.id, task, broker_state, context, params, tick, rng=rng, pool_max=pool_max)
        if best_id is None or score > best_score:
            best_id, best_score = agent.id, score
    return best_id


def ucb1_select(broker_state: BrokerState, exploration: float = 1.0) -> str:
    """Plain UCB1 over posterior counts; unpulled arms first, ties by id."""
    prior_total = {k: v[0] + v[1] for k, v in broker_state.posteriors.items()}
    ids = sorted(broker_state.posteriors)
    pulls = {k: prior_total[k] - 2.0 for k in ids}
    total = sum(pulls.values())
    best_id, best = None, -math.inf
    for k in ids:
        if pulls[k] <= 0:
            return k
        a = broker_state.posteriors[k][0] - 1.0
        value = a / pulls[k] + exploration * math.sqrt(2.0 * math.log(total) / pulls[k])
        if value > best:
            best_id, best = k, value
    return best_id


def posterior_summary(broker_state: BrokerState) -> Mapping[str, float]:
    return {k: broker_state.posterior_mean(k) for k in sorted(broker_state.posteriors)}
