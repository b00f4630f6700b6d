"""Compare the compiled and pure-Python trade kernels on random markets.

    python benchmarks/bench_kernel.py --agents 3 6 12 24 --repeat 5

For each pool size it times full descent phases (trade search plus
execution) and bare trade searches, and checks the two backends agree.
"""

import argparse
import logging
import statistics
import time

import numpy as np

from agora import kernel
from agora.agents import AgentProfile
from agora.market import MarketParams, MarketState, run_market_phase

log = logging.getLogger("bench")


def make_market(rng: np.random.Generator, n: int) -> MarketState:
    agents = [
        AgentProfile(f"a{i:03d}", float(rng.uniform(0.2, 3.0)), tuple(rng.uniform(0, 1, 3)),
                     tuple(rng.uniform(0.5, 3.0, 3)), float(rng.uniform(0, 0.05)), 1.0,
                     float(rng.uniform(0.7, 1.0)))
        for i in range(n)
    ]
    return MarketState.initial(agents, agents[int(rng.integers(n))].id, tuple(rng.uniform(0.2, 1.0, 3)))


def time_it(fn, repeat: int) -> float:
    best = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best.append(time.perf_counter() - start)
    return statistics.median(best)


def bench(n_agents: int, n_markets: int, repeat: int, params: MarketParams) -> dict:
    rng = np.random.default_rng(n_agents)
    markets = [make_market(rng, n_agents) for _ in range(n_markets)]
    row = {"agents": n_agents}
    results = {}
    for backend in kernel.available_backends():
        def phase():
            results[backend] = [run_market_phase(m, params, 10_000, backend) for m in markets]

        def search():
            for m in markets:
                packed = m.packed(params)
                kernel.best_trade(packed, params.tau_trade, params.tau_benefit, params.delta_min,
                                  params.use_effective_capacity, backend=backend)

        row[f"{backend}_phase_ms"] = 1000 * time_it(phase, repeat) / n_markets
        row[f"{backend}_search_us"] = 1e6 * time_it(search, repeat) / n_markets
    row["trades"] = sum(r.trade_count for r in results["python"]) / n_markets
    if "cython" in results:
        row["identical"] = all(a.state.ledger == b.state.ledger for a, b in zip(results["python"], results["cython"]))
        row["phase_speedup"] = row["python_phase_ms"] / row["cython_phase_ms"]
        row["search_speedup"] = row["python_search_us"] / row["cython_search_us"]
    return row


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--agents", type=int, nargs="+", default=[3, 6, 12, 24])
    p.add_argument("--markets", type=int, default=40, help="random markets per pool size")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    if "cython" not in kernel.available_backends():
        log.warning("compiled kernel not built; timing the Python fallback only")
    params = MarketParams(tau_trade=0.05, tau_benefit=0.01)
    header = f"{'agents':>6} {'trades':>7} {'py phase ms':>12} {'cy phase ms':>12} {'x':>6} " \
             f"{'py search us':>13} {'cy search us':>13} {'x':>6} identical"
    print(header)
    for n in args.agents:
        r = bench(n, args.markets, args.repeat, params)
        print(f"{r['agents']:>6} {r['trades']:>7.1f} {r['python_phase_ms']:>12.3f} "
              f"{r.get('cython_phase_ms', float('nan')):>12.3f} {r.get('phase_speedup', float('nan')):>6.1f} "
              f"{r['python_search_us']:>13.1f} {r.get('cython_search_us', float('nan')):>13.1f} "
              f"{r.get('search_speedup', float('nan')):>6.1f} {r.get('identical', '-')}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
