"""Acceptance suite: each criterion as a function returning a verdict.

The checks use brute-force or longhand oracles that do not share code paths
with the fast implementation (no kernel calls in the equilibrium check, plain
before/after cost sums for deltas).
"""

from __future__ import annotations

import dataclasses
import functools
import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .agents import AgentProfile, SyntheticBackend, TaskInstance, processing_cost
from .baselines import WITNESS_HISTORY, StrategyConfig, agnostic_suboptimality_instance, heuristic_choice, strategy_rows
from .broker import NEUTRAL, BrokerState, ScoreContext, record_reward, select_initial_agent
from .gateway import LoopbackServer, RemoteBackend
from .harness import episode_context, generate_tasks, run_comparison, run_episode
from .market import (
    MarketParams, MarketState, TradeProposal, cost_delta, execute_trade, find_most_profitable_trade,
    is_admissible, system_cost,
)
from .scenario import load_scenario
from .uncertainty import DIMENSIONS, DimensionWeights, UncertaintyDecomposition, UncertaintyVector

QUOTED_UA_PFLOPS = 5.54
QUOTED_ACCURACY = {"uncertainty_aware": 0.887, "large_only": 0.892, "small_only": 0.72}
QUOTED_RATIO = {"uncertainty_aware": 0.0625, "large_only": 0.3496, "small_only": 0.0389}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    limit: float | None = None


# --- 1 ----------------------------------------------------------------------

def check_flops() -> tuple[bool, str]:
    reports = {r.strategy: r for r in run_comparison(load_scenario("appendix-e"))}
    pf = {k: r.aggregate["total_pflops"] for k, r in reports.items()}
    oracle_ua = (100 * 20 * 1.4 + 4 * 20 * 2.8 + 8 * 20 * 15.6) / 1000.0
    ok = [
        math.isclose(pf["small_only"], 2.8, rel_tol=1e-12),
        math.isclose(pf["large_only"], 31.2, rel_tol=1e-12),
        math.isclose(pf["uncertainty_aware"], oracle_ua, rel_tol=1e-12),
        abs(pf["uncertainty_aware"] - QUOTED_UA_PFLOPS) / QUOTED_UA_PFLOPS <= 0.005,
    ]
    ratios = {}
    for name in ("uncertainty_aware", "large_only", "small_only"):
        ratios[name] = pf[name] / (QUOTED_ACCURACY[name] * 100.0)
    ok += [abs(ratios[k] - QUOTED_RATIO[k]) / QUOTED_RATIO[k] <= 0.01 for k in QUOTED_RATIO]
    detail = (f"small={pf['small_only']:.4f} large={pf['large_only']:.4f} ua={pf['uncertainty_aware']:.4f} PFLOPs; "
              f"ratio ua={ratios['uncertainty_aware']:.4f} large={ratios['large_only']:.4f} "
              f"small={ratios['small_only']:.4f}")
    return all(ok), detail


# --- 2 ----------------------------------------------------------------------

def check_cost_delta(n: int = 10_000, seed: int = 2) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    w = DimensionWeights(1.0, 0.0, 0.0)
    worst = 0.0
    for _ in range(n):
        ci, cj = rng.uniform(0.01, 10.0, 2)
        xi_j = rng.uniform(0.0, 1.0)
        amount = rng.uniform(1e-4, 1.0)
        held_s = amount + rng.uniform(0.0, 1.0)
        held_r = rng.uniform(0.0, 1.0)
        s = AgentProfile("s", float(ci), (0.0, 0.0, 0.0))
        r = AgentProfile("r", float(cj), (float(xi_j), 0.0, 0.0))
        before = processing_cost(s, [held_s, 0, 0], w) + processing_cost(r, [held_r, 0, 0], w)
        after = (processing_cost(s, [held_s - amount, 0, 0], w)
                 + processing_cost(r, [held_r + (1.0 - xi_j) * amount, 0, 0], w))
        err = abs(cost_delta(s, r, "perc", float(amount)) - (after - before))
        worst = max(worst, err)
    return worst < 1e-12, f"max abs error {worst:.3e} over {n} samples"


# --- 3 and 4 ----------------------------------------------------------------

def random_market(rng: np.random.Generator, zero_loss: bool = False) -> tuple[MarketState, MarketParams]:
    n = int(rng.integers(3, 7))
    agents = []
    for i in range(n):
        if zero_loss:
            agents.append(AgentProfile(f"a{i}", float(rng.uniform(0.2, 3.0)), (0.0, 0.0, 0.0), (10.0, 10.0, 10.0)))
        else:
            agents.append(AgentProfile(
                f"a{i}",
                unit_cost=float(rng.uniform(0.1, 3.0)),
                expertise=tuple(float(x) for x in rng.uniform(0.0, 1.0, 3)),
                capacity=tuple(float(x) for x in rng.uniform(0.3, 2.0, 3)),
                fixed_cost=float(rng.uniform(0.0, 0.05)),
                transfer_efficiency=float(rng.uniform(0.5, 1.0)),
            ))
    if zero_loss:
        u = rng.uniform(0.2, 1.0, 3)
        state = MarketState.initial(agents, agents[int(rng.integers(n))].id, u)
    else:
        caps = np.array([a.capacity for a in agents])
        state = MarketState.from_holdings(agents, rng.uniform(0.0, 1.0, (n, 3)) * caps)
    return state, MarketParams(tau_trade=0.05, tau_benefit=0.01)


def brute_force_equilibrium(state: MarketState, params: MarketParams, grid: int = 48) -> bool:
    """True when no (sender, receiver, dimension, amount) on a fine grid is admissible."""
    for s in state.agents:
        for r in state.agents:
            if s.id == r.id:
                continue
            for d in DIMENSIONS:
                held = state.holding(s.id)[DIMENSIONS.index(d)]
                if held <= 0.0:
                    continue
                for k in range(1, grid + 1):
                    if is_admissible(TradeProposal(s.id, r.id, d, held * k / grid, 0.0), state, params):
                        return False
    return True


@functools.lru_cache(maxsize=None)
def convergence_suite(n: int = 200, seed: int = 3):
    """Runs the descent step by step, auditing every trade. Cached: criteria 3 and 4 share it."""
    rng = np.random.default_rng(seed)
    stats = {"instances": n, "trades": 0, "truncated": 0, "nonmonotone": 0, "not_equilibrium": 0,
             "conservation_err": 0.0}
    for _ in range(n):
        state, params = random_market(rng)
        cost = system_cost(state, params.weights)
        for _step in range(10_000):
            proposal = find_most_profitable_trade(state, params)
            if proposal is None:
                break
            nxt = execute_trade(state, proposal, params)
            new_cost = system_cost(nxt, params.weights)
            if not new_cost < cost:
                stats["nonmonotone"] += 1
            d = DIMENSIONS.index(proposal.dimension)
            sender, receiver = state.profile(proposal.sender), state.profile(proposal.receiver)
            du = float(nxt.holdings[:, d].sum() - state.holdings[:, d].sum())
            expect = (1.0 - receiver.expertise[d] - sender.transfer_efficiency) * proposal.amount
            stats["conservation_err"] = max(stats["conservation_err"], abs(du - expect))
            stats["trades"] += 1
            state, cost = nxt, new_cost
        else:
            stats["truncated"] += 1
        if not brute_force_equilibrium(state, params):
            stats["not_equilibrium"] += 1
    return stats


def check_convergence() -> tuple[bool, str]:
    st = convergence_suite()
    ok = st["truncated"] == 0 and st["nonmonotone"] == 0 and st["not_equilibrium"] == 0
    return ok, (f"{st['instances']} instances, {st['trades']} trades, truncated={st['truncated']} "
                f"nonmonotone={st['nonmonotone']} non-equilibrium={st['not_equilibrium']}")


def check_conservation() -> tuple[bool, str]:
    st = convergence_suite()
    rng = np.random.default_rng(4)
    exact_zero = True
    lossless_trades = 0
    for _ in range(100):
        state, params = random_market(rng, zero_loss=True)
        before = state.holdings.sum(axis=0)
        while True:
            proposal = find_most_profitable_trade(state, params)
            if proposal is None:
                break
            state = execute_trade(state, proposal, params)
            lossless_trades += 1
            if not np.array_equal(state.holdings.sum(axis=0), before):
                exact_zero = False
    ok = st["conservation_err"] <= 1e-12 and exact_zero and lossless_trades > 0
    return ok, (f"max conservation error = {st['conservation_err']:.3e} over {st['trades']} trades; "
                f"lossless instances exact={exact_zero} over {lossless_trades} trades")


# --- 5 ----------------------------------------------------------------------

def longhand_gap(task: TaskInstance, agents) -> float:
    """Router pick's solo cost minus the best handler-plus-one-full-transfer cost."""
    w = MarketParams().weights
    u = task.epistemic.as_tuple()
    chosen = heuristic_choice(task, agents, WITNESS_HISTORY)
    heuristic = chosen.unit_cost * (w.w_perc * u[0]) + chosen.fixed_cost
    best = heuristic
    for h in agents:
        best = min(best, h.unit_cost * w.w_perc * u[0] + h.fixed_cost)
        for r in agents:
            if r.id != h.id:
                best = min(best, r.unit_cost * w.w_perc * (1.0 - r.expertise[0]) * u[0] + r.fixed_cost)
    return heuristic - best


def check_witness() -> tuple[bool, str]:
    positive = 0
    agree = 0
    for seed in range(100):
        tasks, agents, gap = agnostic_suboptimality_instance(seed)
        positive += gap > 0
        agree += math.isclose(gap, longhand_gap(tasks[0], agents), rel_tol=1e-9, abs_tol=1e-12)
    return positive == 100 and agree == 100, f"positive gap on {positive}/100 seeds, longhand agrees on {agree}/100"


# --- 6 ----------------------------------------------------------------------

def bandit_frequency(seeds: int = 20, rounds: int = 1000, window: tuple[int, int] = (500, 1000)) -> float:
    means = [0.9, 0.5, 0.5, 0.5, 0.5]
    pool = [AgentProfile(f"arm{i}", 1.0) for i in range(len(means))]
    zero = UncertaintyVector.zeros()
    task = TaskInstance("bandit", UncertaintyDecomposition(zero, zero))
    freqs = []
    for seed in range(seeds):
        rng = np.random.default_rng([seed, 6])
        state = BrokerState.for_pool(pool)
        context = ScoreContext(pool)
        hits = 0
        for t in range(rounds):
            pick = select_initial_agent(task, state, context, NEUTRAL, t, rng)
            idx = int(pick[3:])
            record_reward(state, pick, int(rng.random() < means[idx]), t)
            if window[0] <= t < window[1]:
                hits += idx == 0
        freqs.append(hits / (window[1] - window[0]))
    return float(np.mean(freqs))


def check_bandit() -> tuple[bool, str]:
    f = bandit_frequency()
    return f > 0.9, f"best-arm frequency {f:.4f} over rounds 500-1000, 20 seeds"


# --- 7 ----------------------------------------------------------------------

def ablation(seeds: int = 50):
    base = load_scenario("default-market")

    def total(cfg):
        rows = strategy_rows(StrategyConfig("agora"), generate_tasks(cfg), cfg.pool,
                             SyntheticBackend(cfg.seed, cfg.tokens_per_task), episode_context(cfg))
        return sum(r.cost for r in rows)

    full, neutral, dominated = [], [], 0
    for seed in range(seeds):
        cfg = dataclasses.replace(base, seed=seed)
        f = total(cfg)
        full.append(f)
        neutral.append(total(dataclasses.replace(cfg, broker=NEUTRAL)))
        dominated += f < total(dataclasses.replace(cfg, max_trades=0))
    return float(np.mean(full)), float(np.mean(neutral)), dominated


def check_ablation() -> tuple[bool, str]:
    full, neutral, dominated = ablation()
    return neutral >= full and dominated == 50, (
        f"mean cost full={full:.3f} net-return-only={neutral:.3f}; trading cheaper on {dominated}/50 seeds")


# --- 8 ----------------------------------------------------------------------

def _cli_run(scenario: str, out: Path) -> dict[str, bytes]:
    env = dict(os.environ, AGORA_LOG_LEVEL="error")
    subprocess.run([sys.executable, "-m", "agora", "run", "--scenario", scenario, "--out", str(out),
                    "--seeds", "0,1"], check=True, env=env, stdout=subprocess.DEVNULL)
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def check_determinism() -> tuple[bool, str]:
    same = []
    with tempfile.TemporaryDirectory() as tmp:
        for name in ("appendix-e", "theorem1", "default-market"):
            a = _cli_run(name, Path(tmp) / f"{name}-1")
            b = _cli_run(name, Path(tmp) / f"{name}-2")
            same.append(bool(a) and a == b)
    return all(same), f"byte-identical outputs across two processes: {sum(same)}/3 scenarios"


# --- 9 ----------------------------------------------------------------------

def check_gateway() -> tuple[bool, str]:
    cfg = load_scenario("default-market")
    local = run_episode(cfg).to_json()
    with LoopbackServer(cfg.pool, cfg.seed, cfg.tokens_per_task) as server:
        remote = run_episode(cfg, backend=RemoteBackend(server.endpoints)).to_json()
    return local == remote, f"reports identical: {local == remote} ({len(local)} bytes)"


CRITERIA: list[tuple[int, str, Callable[[], tuple[bool, str]], float | None]] = [
    (1, "escalation FLOPs reproduction", check_flops, 5.0),
    (2, "cost delta oracle equivalence", check_cost_delta, 1.0),
    (3, "convergence suite", check_convergence, 30.0),
    (4, "conservation identity", check_conservation, None),
    (5, "cost-agnostic suboptimality witness", check_witness, 10.0),
    (6, "bandit consistency", check_bandit, 10.0),
    (7, "ablation directionality", check_ablation, None),
    (8, "determinism across processes", check_determinism, None),
    (9, "gateway equivalence", check_gateway, None),
]


def run_criterion(number: int) -> CriterionResult:
    num, name, fn, limit = next(c for c in CRITERIA if c[0] == number)
    start = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # a crash is a failure, reported as such
        passed, detail = False, f"error: {type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - start
    if limit is not None and elapsed > limit:
        passed = False
        detail += f"; runtime {elapsed:.2f}s exceeds {limit:.0f}s"
    return CriterionResult(num, name, passed, detail, elapsed, limit)


def run_all(only: list[int] | None = None) -> list[CriterionResult]:
    return [run_criterion(num) for num, *_ in CRITERIA if not only or num in only]


def format_line(r: CriterionResult) -> str:
    limit = f"/{r.limit:.0f}s" if r.limit is not None else ""
    return f"[{'PASS' if r.passed else 'FAIL'}] {r.number}. {r.name} ({r.seconds:.2f}s{limit}): {r.detail}"


def format_table(results: list[CriterionResult]) -> str:
    lines = [format_line(r) for r in results]
    lines.append(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return "\n".join(lines) + "\n"
