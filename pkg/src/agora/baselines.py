"""Comparison strategies: single agent, random, the similarity/history
router, top-2 alternation, tiered cascade and small-first escalation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

from .agents import AgentProfile, Backend, BackendError, SyntheticBackend, TaskInstance, evaluate, processing_cost
from .broker import task_distance
from .episode import (
    STREAM_OUTCOME, STREAM_STRATEGY, EpisodeContext, draw_correct, run_agora, solo_residual, stream,
)
from .market import MarketParams, MarketState, run_market_phase, system_cost
from .report import EpisodeReport, TaskRow, compute_metrics
from .uncertainty import UncertaintyDecomposition, UncertaintyVector, total_uncertainty

log = logging.getLogger(__name__)

KINDS = ("agora", "single_agent", "random", "heuristic_router", "top2", "tiered_cascade", "uncertainty_aware")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    agent: str | None = None
    agents: tuple[str, ...] = ()
    order: tuple[str, ...] = ()
    escalation_threshold: float = 0.5
    alpha: float = 0.5
    beta_sim: float = 0.5
    # (agent id, forced escalation count) pairs; empty means threshold mode.
    calibrated_counts: tuple[tuple[str, int], ...] = ()
    seed: int = 0
    label: str | None = None
    reported_accuracy: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if not (0.0 <= self.escalation_threshold <= 1.0):
            raise ValueError("escalation_threshold must lie in [0, 1]")
        if self.alpha < 0 or self.beta_sim < 0:
            raise ValueError("router coefficients must be >= 0")
        if self.kind == "single_agent" and not self.agent:
            raise ValueError("single_agent needs an agent id")
        if self.kind == "top2" and len(self.agents) != 2:
            raise ValueError("top2 needs exactly two agent ids")
        if self.kind == "tiered_cascade" and not self.order:
            raise ValueError("tiered_cascade needs an order")
        if any(n < 0 for _, n in self.calibrated_counts):
            raise ValueError("calibrated counts must be >= 0")
        if self.reported_accuracy is not None and not (0.0 <= self.reported_accuracy <= 1.0):
            raise ValueError("reported_accuracy must lie in [0, 1]")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "single_agent":
            return f"single_agent:{self.agent}"
        return self.kind

    def referenced_ids(self) -> list[str]:
        ids = list(self.agents) + list(self.order) + [k for k, _ in self.calibrated_counts]
        if self.agent:
            ids.insert(0, self.agent)
        return ids

    def pool_errors(self, pool: Sequence[AgentProfile]) -> list[str]:
        known = {a.id for a in pool}
        errors = [f"unknown agent id {i!r}" for i in self.referenced_ids() if i not in known]
        if self.kind == "uncertainty_aware" and self.calibrated_counts:
            ladder = self.order or tuple(a.id for a in escalation_ladder(pool))
            targets = set(ladder[1:])
            errors += [f"calibrated target {k!r} is not an escalation step" for k, _ in self.calibrated_counts
                       if k in known and k not in targets]
        return errors


def heuristic_score(agent: AgentProfile, task: TaskInstance, history: Mapping[str, float],
                    alpha: float = 0.5, beta_sim: float = 0.5) -> float:
    """History-plus-similarity router score. Blind to cost and to how the
    task's uncertainty is split across dimensions."""
    p_hist = history[agent.id]
    if not (0.0 <= p_hist <= 1.0):
        raise ValueError("historical success rate must lie in [0, 1]")
    sim = 1.0 - task_distance(agent.expertise, task.feature_vector, "cosine_dissimilarity")
    return alpha * p_hist + beta_sim * sim


def escalation_ladder(pool: Sequence[AgentProfile]) -> list[AgentProfile]:
    return sorted(pool, key=lambda a: (a.tflops_per_token, a.id))


class _Attempts:
    """Running totals for one task across evaluation attempts."""

    def __init__(self, task: TaskInstance, backend: Backend, w):
        self.task = task
        self.backend = backend
        self.w = w
        self.selected: list[str] = []
        self.cost = 0.0
        self.flops = 0.0
        self.failed = False

    def attempt(self, agent: AgentProfile) -> bool:
        """Charge one attempt; False if the backend failed."""
        self.selected.append(agent.id)
        self.cost += processing_cost(agent, self.task.epistemic, self.w)
        try:
            response = evaluate(self.backend, agent, self.task)
        except BackendError as exc:
            log.warning("task %s: agent %s failed: %s", self.task.id, agent.id, exc)
            self.failed = True
            return False
        self.flops += response.tokens_generated * agent.tflops_per_token
        return True

    def residual(self, agent: AgentProfile) -> float:
        return total_uncertainty(solo_residual(agent, self.task), self.w)

    def row(self, norm: float, correct: bool) -> TaskRow:
        return TaskRow(self.task.id, tuple(self.selected), 0, norm, correct and not self.failed,
                       self.cost, self.flops, False, self.failed)


def _finish(att: _Attempts, agent: AgentProfile, rng) -> TaskRow:
    norm = att.residual(agent)
    if att.failed:
        return att.row(norm, False)
    return att.row(norm, draw_correct(rng, norm))


def _run_baseline(config: StrategyConfig, tasks, pool, backend, ctx: EpisodeContext) -> list[TaskRow]:
    by_id = {a.id: a for a in pool}
    ordered = sorted(pool, key=lambda a: a.id)
    rng_outcome = stream(ctx.seed, STREAM_OUTCOME)
    rng_strategy = stream(ctx.seed, STREAM_STRATEGY, config.seed & 0xFFFFFFFF)
    w = ctx.weights
    rows: list[TaskRow] = []

    if config.kind == "uncertainty_aware":
        return _run_escalation(config, tasks, pool, backend, ctx)

    wins = {a.id: 0 for a in ordered}
    tries = {a.id: 0 for a in ordered}
    for i, task in enumerate(tasks):
        att = _Attempts(task, backend, w)
        if config.kind == "single_agent":
            agent = by_id[config.agent]
        elif config.kind == "random":
            agent = ordered[int(rng_strategy.integers(len(ordered)))]
        elif config.kind == "top2":
            agent = by_id[config.agents[i % 2]]
        elif config.kind == "heuristic_router":
            # Laplace-smoothed empirical success rate.
            history = {k: (wins[k] + 1) / (tries[k] + 2) for k in wins}
            agent, best = None, None
            for cand in ordered:
                score = heuristic_score(cand, task, history, config.alpha, config.beta_sim)
                if best is None or score > best:
                    agent, best = cand, score
        elif config.kind == "tiered_cascade":
            row = None
            for step, agent_id in enumerate(config.order):
                agent = by_id[agent_id]
                if not att.attempt(agent):
                    row = att.row(att.residual(agent), False)
                    break
                norm = att.residual(agent)
                correct = draw_correct(rng_outcome, norm)
                last = step == len(config.order) - 1
                if last or (correct and norm <= config.escalation_threshold):
                    row = att.row(norm, correct)
                    break
            rows.append(row)
            continue
        else:
            raise ValueError(f"{config.kind} is not a baseline strategy")
        att.attempt(agent)
        row = _finish(att, agent, rng_outcome)
        tries[agent.id] += 1
        wins[agent.id] += int(row.correct)
        rows.append(row)
    return rows


def _run_escalation(config: StrategyConfig, tasks, pool, backend, ctx: EpisodeContext) -> list[TaskRow]:
    """Every task starts on the cheapest-compute agent and climbs the ladder.

    Threshold mode escalates while the current agent's residual exceeds the
    threshold. Calibrated mode forces exact escalation counts: tasks are
    ranked by the first agent's residual, the largest counts go to the top
    rung first.
    """
    by_id = {a.id: a for a in pool}
    ladder = [by_id[i] for i in config.order] if config.order else escalation_ladder(pool)
    rng_outcome = stream(ctx.seed, STREAM_OUTCOME)
    w = ctx.weights
    first = ladder[0]
    attempts = []
    for task in tasks:
        att = _Attempts(task, backend, w)
        att.attempt(first)
        attempts.append(att)

    if config.calibrated_counts:
        counts = dict(config.calibrated_counts)
        if sum(counts.values()) > len(tasks):
            raise ValueError("calibrated counts exceed the number of tasks")
        ranked = sorted(range(len(tasks)), key=lambda i: (-attempts[i].residual(first), i))
        target = {}
        pos = 0
        for agent in reversed(ladder[1:]):
            for i in ranked[pos:pos + counts.get(agent.id, 0)]:
                target[i] = agent
            pos += counts.get(agent.id, 0)
        rows = []
        for i, att in enumerate(attempts):
            final = first
            if i in target and not att.failed:
                final = target[i]
                att.attempt(final)
            rows.append(_finish(att, final, rng_outcome))
        return rows

    rows = []
    for att in attempts:
        current = first
        for nxt in ladder[1:]:
            if att.failed or att.residual(current) <= config.escalation_threshold:
                break
            current = nxt
            att.attempt(current)
        rows.append(_finish(att, current, rng_outcome))
    return rows


def strategy_rows(config: StrategyConfig, tasks, pool, backend, ctx: EpisodeContext) -> list[TaskRow]:
    errors = config.pool_errors(pool)
    if errors:
        raise ValueError("; ".join(errors))
    if config.kind == "agora":
        rows, _ = run_agora(tasks, pool, backend, ctx)
        return rows
    return _run_baseline(config, tasks, pool, backend, ctx)


def run_strategy(
    config: StrategyConfig,
    tasks: Sequence[TaskInstance],
    agents: Sequence[AgentProfile],
    params: EpisodeContext,
    backend: Backend | None = None,
    reference_cost: float | None = None,
    scenario: str = "adhoc",
) -> EpisodeReport:
    """Run one strategy over a task list and aggregate it."""
    if backend is None:
        backend = SyntheticBackend(params.seed)
    rows = strategy_rows(config, tasks, agents, backend, params)
    metrics = compute_metrics(rows, params.epsilon, reference_cost) if rows else {}
    return EpisodeReport(scenario, params.seed, config.name, rows, metrics)


# Agents for the cost-agnostic witness: A looks better on history and
# similarity, B resolves the task far more cheaply.
WITNESS_AGENTS = (
    AgentProfile("A", unit_cost=5.0, expertise=(0.2, 0.0, 0.0), capacity=(1.0, 1.0, 1.0)),
    AgentProfile("B", unit_cost=1.0, expertise=(0.9, 0.0, 0.0), capacity=(1.0, 1.0, 1.0)),
)
WITNESS_HISTORY = {"A": 0.9, "B": 0.6}


def heuristic_choice(task: TaskInstance, agents: Sequence[AgentProfile], history: Mapping[str, float],
                     alpha: float = 0.5, beta_sim: float = 0.5) -> AgentProfile:
    best, best_score = None, None
    for agent in sorted(agents, key=lambda a: a.id):
        score = heuristic_score(agent, task, history, alpha, beta_sim)
        if best is None or score > best_score:
            best, best_score = agent, score
    return best


def market_assignment_cost(task: TaskInstance, agents: Sequence[AgentProfile],
                           params: MarketParams = MarketParams(), max_trades: int = 1000) -> float:
    """Cheapest equilibrium cost reachable by choosing the handler and letting the market settle."""
    best = None
    for agent in sorted(agents, key=lambda a: a.id):
        start = MarketState.initial(agents, agent.id, task.epistemic.as_tuple())
        final = run_market_phase(start, params, max_trades).state
        cost = system_cost(final, params.weights)
        if best is None or cost < best:
            best = cost
    return best


def agnostic_suboptimality_instance(
    seed: int = 0,
    agents: Sequence[AgentProfile] | None = None,
    history: Mapping[str, float] | None = None,
    params: MarketParams = MarketParams(),
) -> tuple[list[TaskInstance], list[AgentProfile], float]:
    """Single perceptual task where the router's favourite is the costly resolver.

    The task magnitude is drawn per seed from [0.3, 1.0]. Returns the tasks,
    the agents and the cost gap (router assignment minus market assignment).
    """
    agents = list(agents if agents is not None else WITNESS_AGENTS)
    history = dict(history if history is not None else WITNESS_HISTORY)
    rng = stream(seed, STREAM_STRATEGY, 0x7E)
    magnitude = float(rng.uniform(0.3, 1.0))
    u = UncertaintyVector(magnitude, 0.0, 0.0)
    task = TaskInstance(f"witness-{seed}", UncertaintyDecomposition(u, UncertaintyVector.zeros()),
                        feature_vector=(1.0, 0.0, 0.0))
    if len(agents) < 2:
        return [task], agents, 0.0
    chosen = heuristic_choice(task, agents, history)
    heuristic_cost = processing_cost(chosen, u, params.weights)
    gap = heuristic_cost - market_assignment_cost(task, agents, params)
    return [task], agents, gap
