"""Per-task plumbing shared by every strategy: RNG streams, the correctness
model, and the broker-then-market loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .agents import AgentProfile, Backend, BackendError, TaskInstance, evaluate, processing_cost
from .broker import BrokerParams, BrokerState, ScoreContext, record_reward, select_initial_agent
from .market import MarketParams, MarketState, run_market_phase, system_cost
from .report import TaskRow
from .uncertainty import DEFAULT_WEIGHTS, DimensionWeights, UncertaintyVector, total_uncertainty

log = logging.getLogger(__name__)

# Independent generator streams, keyed off the scenario seed.
STREAM_TASKS = 1
STREAM_BROKER = 2
STREAM_OUTCOME = 3
STREAM_STRATEGY = 4


def stream(seed: int, stream_id: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, stream_id, *extra])


@dataclass(frozen=True)
class EpisodeContext:
    seed: int = 0
    weights: DimensionWeights = DEFAULT_WEIGHTS
    market: MarketParams = field(default_factory=MarketParams)
    broker: BrokerParams = field(default_factory=BrokerParams)
    max_trades: int = 1000
    epsilon: float = math.inf
    kernel_backend: str | None = None


def residual_uncertainty(agents: Sequence[AgentProfile], holdings) -> UncertaintyVector:
    """Uncertainty left unresolved: each holder resolves its expertise share of what it holds."""
    acc = [0.0, 0.0, 0.0]
    for agent, row in zip(agents, holdings):
        for d in range(3):
            acc[d] += (1.0 - agent.expertise[d]) * float(row[d])
    return UncertaintyVector(*acc)


def solo_residual(agent: AgentProfile, task: TaskInstance) -> UncertaintyVector:
    return residual_uncertainty([agent], [task.epistemic.as_tuple()])


def success_probability(residual_norm: float) -> float:
    return 1.0 - min(1.0, max(0.0, residual_norm))


def draw_correct(rng: np.random.Generator, residual_norm: float) -> bool:
    """Bernoulli correctness draw; always consumes exactly one uniform."""
    return bool(rng.random() < success_probability(residual_norm))


@dataclass
class TaskTrace:
    """Initial and terminal market states of one agora task, for audits."""

    task_id: str
    initial: MarketState
    final: MarketState


def run_agora(
    tasks: Sequence[TaskInstance],
    pool: Sequence[AgentProfile],
    backend: Backend,
    ctx: EpisodeContext,
    broker_state: BrokerState | None = None,
    traces: list | None = None,
) -> tuple[list[TaskRow], BrokerState]:
    """Broker picks a handler, the handler takes the whole task, the market
    redistributes it, and the residual drives the reward."""
    pool = sorted(pool, key=lambda a: a.id)
    by_id = {a.id: a for a in pool}
    if broker_state is None:
        broker_state = BrokerState.for_pool(pool, ctx.broker.prior)
    rng_broker = stream(ctx.seed, STREAM_BROKER)
    rng_outcome = stream(ctx.seed, STREAM_OUTCOME)
    w = ctx.weights
    rows = []
    for tick, task in enumerate(tasks):
        context = ScoreContext(pool, w, ctx.market, None, ctx.kernel_backend)
        handler = select_initial_agent(task, broker_state, context, ctx.broker, tick, rng_broker)
        u = task.epistemic.as_tuple()
        start = MarketState.initial(pool, handler, u)
        flops = 0.0
        try:
            response = evaluate(backend, by_id[handler], task)
            flops += response.tokens_generated * by_id[handler].tflops_per_token
        except BackendError as exc:
            log.warning("task %s: handler %s failed: %s", task.id, handler, exc)
            cost = processing_cost(by_id[handler], u, w)
            norm = total_uncertainty(solo_residual(by_id[handler], task), w)
            rows.append(TaskRow(task.id, (handler,), 0, norm, False, cost, flops, False, True))
            record_reward(broker_state, handler, 0, tick)
            if traces is not None:
                traces.append(TaskTrace(task.id, start, start))
            continue

        if ctx.max_trades > 0:
            final, n_trades, truncated = run_market_phase(start, ctx.market, ctx.max_trades, ctx.kernel_backend)
        else:
            final, n_trades, truncated = start, 0, False

        selected = [handler]
        for entry in final.ledger:
            if entry.receiver not in selected:
                selected.append(entry.receiver)
        failed = False
        for agent_id in selected[1:]:
            try:
                response = evaluate(backend, by_id[agent_id], task)
            except BackendError as exc:
                log.warning("task %s: receiver %s failed: %s", task.id, agent_id, exc)
                failed = True
                break
            flops += response.tokens_generated * by_id[agent_id].tflops_per_token

        norm = total_uncertainty(residual_uncertainty(final.agents, final.holdings), w)
        cost = system_cost(final, w)
        correct = False if failed else draw_correct(rng_outcome, norm)
        record_reward(broker_state, handler, int(correct), tick)
        rows.append(TaskRow(task.id, tuple(selected), n_trades, norm, correct, cost, flops, truncated, failed))
        if traces is not None:
            traces.append(TaskTrace(task.id, start, final))
    return rows, broker_state
