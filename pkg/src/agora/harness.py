"""Seeded episode runner: task generation, strategy dispatch, reference
costing and report assembly."""

from __future__ import annotations

import csv
import io
import logging
from typing import Sequence

from .agents import Backend, SyntheticBackend, TaskInstance, synthetic_label
from .baselines import StrategyConfig, strategy_rows
from .broker import BrokerParams
from .episode import STREAM_TASKS, EpisodeContext, TaskTrace, draw_correct, run_agora, stream
from .gateway import RemoteBackend, RetryPolicy
from .market import MarketParams, replay_ledger, system_cost
from .report import EpisodeReport, compute_metrics
from .scenario import ScenarioConfig
from .uncertainty import DIMENSIONS, UncertaintyVector, decompose

log = logging.getLogger(__name__)

AGORA = StrategyConfig("agora")


def generate_tasks(config: ScenarioConfig) -> list[TaskInstance]:
    """Draw ``n_tasks`` tasks from the scenario's mix, deterministically in the seed.

    Per task the draws are taken in a fixed order: one magnitude per
    dimension, then the randomness cue, then the knowledge-gap cue. The
    feature vector is the magnitude profile, normalised to unit sum.
    """
    rng = stream(config.seed, STREAM_TASKS)
    mix = config.task_mix
    tasks = []
    for i in range(config.n_tasks):
        total = [float(rng.uniform(*getattr(mix, d))) for d in DIMENSIONS]
        randomness = float(rng.uniform(*mix.randomness))
        gap = float(rng.uniform(*mix.knowledge_gap))
        split = decompose(UncertaintyVector(*total), gap, randomness)
        norm = sum(total)
        features = tuple(x / norm for x in total) if norm > 0 else (0.0, 0.0, 0.0)
        task_id = f"t{i:05d}"
        tasks.append(TaskInstance(task_id, split, features, mix.max_reward, synthetic_label(task_id)))
    return tasks


def episode_context(config: ScenarioConfig, kernel_backend: str | None = None) -> EpisodeContext:
    return EpisodeContext(config.seed, config.weights, config.market, config.broker, config.max_trades,
                          config.epsilon_resolve, kernel_backend)


def reference_context(config: ScenarioConfig, kernel_backend: str | None = None) -> EpisodeContext:
    """Same pool and seed, every market and broker knob at its default."""
    return EpisodeContext(config.seed, config.weights, MarketParams(weights=config.weights), BrokerParams(),
                          1000, config.epsilon_resolve, kernel_backend)


def make_backend(config: ScenarioConfig) -> Backend:
    if config.backend.kind == "remote":
        policy = RetryPolicy(max_retries=config.backend.max_retries, timeout_s=config.backend.timeout_s)
        return RemoteBackend(dict(config.backend.endpoints), policy, config.backend.bearer_token)
    return SyntheticBackend(config.seed, config.tokens_per_task)


def run_episode(
    config: ScenarioConfig,
    backend: Backend | None = None,
    strategy: StrategyConfig | None = None,
    kernel_backend: str | None = None,
    tasks: Sequence[TaskInstance] | None = None,
) -> EpisodeReport:
    """Run one strategy (the scenario's own by default) and price it against the reference."""
    strategy = strategy or config.strategy
    backend = backend or make_backend(config)
    tasks = generate_tasks(config) if tasks is None else list(tasks)
    ctx = episode_context(config, kernel_backend)
    rows = strategy_rows(strategy, tasks, config.pool, backend, ctx)
    if not rows:
        return EpisodeReport(config.name, config.seed, strategy.name, rows, {})
    ref_ctx = reference_context(config, kernel_backend)
    if strategy.kind == "agora" and ctx == ref_ctx:
        ref_rows = rows
    else:
        ref_rows = strategy_rows(AGORA, tasks, config.pool, backend, ref_ctx)
    reference = compute_metrics(ref_rows)["total_cost"]
    metrics = compute_metrics(rows, config.epsilon_resolve, reference)
    if strategy.reported_accuracy is not None:
        metrics["reported_accuracy"] = strategy.reported_accuracy
        metrics["cost_performance_ratio_at_reported"] = (
            metrics["total_pflops"] / (strategy.reported_accuracy * 100.0)
            if strategy.reported_accuracy > 0 else float("inf")
        )
    return EpisodeReport(config.name, config.seed, strategy.name, rows, metrics)


def run_comparison(config: ScenarioConfig, backend: Backend | None = None,
                   kernel_backend: str | None = None) -> list[EpisodeReport]:
    """The scenario's strategy followed by each comparison strategy, on one task list."""
    backend = backend or make_backend(config)
    tasks = generate_tasks(config)
    return [run_episode(config, backend, s, kernel_backend, tasks)
            for s in (config.strategy, *config.comparisons)]


def audit_agora_costs(config: ScenarioConfig, kernel_backend: str | None = None) -> tuple[float, float]:
    """Total agora cost as reported, and as recomputed by replaying every ledger.

    The second figure prices each task's terminal portfolios rebuilt from
    the initial allocation and the executed trades alone.
    """
    tasks = generate_tasks(config)
    traces: list[TaskTrace] = []
    rows, _ = run_agora(tasks, config.pool, make_backend(config), episode_context(config, kernel_backend),
                        traces=traces)
    reported = compute_metrics(rows)["total_cost"]
    recomputed = 0.0
    for trace in traces:
        holdings = replay_ledger(trace.initial, trace.final.ledger)
        rebuilt = type(trace.initial)(trace.initial.agents, trace.initial.base, holdings)
        recomputed += system_cost(rebuilt, config.weights)
    return reported, recomputed


def plot_points(reports: Sequence[EpisodeReport]) -> list[tuple[float, float, str]]:
    """(compute in PFLOPs, accuracy, series) triples for cost-vs-accuracy plots."""
    return [(r.aggregate["total_pflops"], r.aggregate["accuracy"], r.strategy) for r in reports]


def plot_csv(reports: Sequence[EpisodeReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("x", "y", "series"))
    for x, y, s in plot_points(reports):
        w.writerow((repr(x), repr(y), s))
    return buf.getvalue()


__all__ = [
    "AGORA",
    "audit_agora_costs",
    "draw_correct",
    "episode_context",
    "generate_tasks",
    "make_backend",
    "plot_csv",
    "plot_points",
    "reference_context",
    "run_agora",
    "run_comparison",
    "run_episode",
]
