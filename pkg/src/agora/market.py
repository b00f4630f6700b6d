"""Profitability-driven uncertainty trading and greedy cost descent.

A market holds one task's epistemic uncertainty spread over the agent pool.
A trade moves an amount of one dimension from a sender to a receiver. The
sender sheds ``transfer_efficiency * amount``; the receiver keeps the share
its expertise does not resolve. The descent phase repeatedly applies the
single most profitable admissible trade until none is left.

Cost deltas are measured in the same units as :func:`system_cost`: the
per-dimension weight multiplies the variable term, and fixed costs enter when
a trade empties the sender or wakes up an idle receiver.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, TextIO

import numpy as np

from . import kernel
from .agents import AgentPortfolio, AgentProfile, LedgerEntry, processing_cost
from .uncertainty import DEFAULT_WEIGHTS, DIMENSIONS, DimensionWeights, UncertaintyVector

log = logging.getLogger(__name__)

LEDGER_COLUMNS = ("tick", "sender", "receiver", "dimension", "amount", "cost_delta")
CAI_EXPERTISE_FLOOR = 1e-3


class InadmissibleTrade(ValueError):
    """Raised when asked to execute a trade the protocol forbids."""


def dim_index(dimension: str | int) -> int:
    if isinstance(dimension, int):
        if not 0 <= dimension < 3:
            raise ValueError(f"dimension index {dimension} out of range")
        return dimension
    try:
        return DIMENSIONS.index(dimension)
    except ValueError:
        raise ValueError(f"unknown dimension {dimension!r}") from None


@dataclass(frozen=True)
class MarketParams:
    tau_trade: float = 0.15
    tau_benefit: float = 0.08
    delta_min: float = 1e-9
    use_effective_capacity: bool = True
    weights: DimensionWeights = DEFAULT_WEIGHTS

    def __post_init__(self):
        if self.tau_trade < 0.0 or self.tau_benefit < 0.0:
            raise ValueError("trade thresholds must be >= 0")
        if not self.delta_min > 0.0:
            raise ValueError("delta_min must be > 0")


@dataclass(frozen=True)
class TradeProposal:
    sender: str
    receiver: str
    dimension: str
    amount: float
    cost_delta: float


@dataclass(eq=False)
class MarketState:
    """Portfolios of one task episode.

    ``agents`` is kept sorted by id; row ``i`` of ``base`` and ``holdings``
    belongs to ``agents[i]``. ``holdings`` is the portfolio total; the net
    transferred amount is ``holdings - base``.
    """

    agents: tuple[AgentProfile, ...]
    base: np.ndarray
    holdings: np.ndarray
    ledger: tuple[LedgerEntry, ...] = ()
    tick: int = 0
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        ids = [a.id for a in self.agents]
        if ids != sorted(ids):
            order = sorted(range(len(ids)), key=ids.__getitem__)
            self.agents = tuple(self.agents[i] for i in order)
            self.base = np.asarray(self.base, dtype=np.float64)[order]
            self.holdings = np.asarray(self.holdings, dtype=np.float64)[order]
            ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")
        self.base = np.array(self.base, dtype=np.float64).reshape(len(ids), 3)
        self.holdings = np.array(self.holdings, dtype=np.float64).reshape(len(ids), 3)
        self._index = {a: i for i, a in enumerate(ids)}

    @classmethod
    def initial(cls, agents: Sequence[AgentProfile], handler: str, u: UncertaintyVector | Sequence[float], tick: int = 0) -> "MarketState":
        """Whole task vector on the handler, every other portfolio empty."""
        agents = tuple(sorted(agents, key=lambda a: a.id))
        base = np.zeros((len(agents), 3))
        ids = [a.id for a in agents]
        if handler not in ids:
            raise KeyError(f"unknown handler {handler!r}")
        base[ids.index(handler)] = tuple(u)
        return cls(agents, base, base.copy(), (), tick)

    @classmethod
    def from_holdings(cls, agents: Sequence[AgentProfile], holdings) -> "MarketState":
        h = np.asarray(holdings, dtype=np.float64)
        return cls(tuple(agents), h.copy(), h.copy())

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.agents]

    def index(self, agent_id: str) -> int:
        try:
            return self._index[agent_id]
        except KeyError:
            raise KeyError(f"unknown agent {agent_id!r}") from None

    def profile(self, agent_id: str) -> AgentProfile:
        return self.agents[self.index(agent_id)]

    def holding(self, agent_id: str) -> UncertaintyVector:
        return UncertaintyVector(*(float(x) for x in self.holdings[self.index(agent_id)]))

    @property
    def portfolios(self) -> dict[str, AgentPortfolio]:
        out = {}
        for i, a in enumerate(self.agents):
            base = UncertaintyVector(*(float(x) for x in self.base[i]))
            net = tuple(float(x) for x in self.holdings[i] - self.base[i])
            out[a.id] = AgentPortfolio(base, net)
        return out

    def packed(self, params: MarketParams) -> kernel.PackedMarket:
        return kernel.PackedMarket(
            self.holdings,
            [a.unit_cost for a in self.agents],
            [a.expertise for a in self.agents],
            [a.transfer_efficiency for a in self.agents],
            [a.fixed_cost for a in self.agents],
            [a.capacity for a in self.agents],
            params.weights.as_tuple(),
        )

    def copy(self) -> "MarketState":
        return MarketState(self.agents, self.base.copy(), self.holdings.copy(), self.ledger, self.tick)


def cost_delta(sender: AgentProfile, receiver: AgentProfile, dimension: str | int, amount: float, weight: float = 1.0) -> float:
    """Variable processing-cost change of moving ``amount`` from sender to receiver.

    The receiver pays its unit cost on the share it cannot resolve; the sender
    saves its unit cost on what it actually sheds. Negative means the system
    gets cheaper.
    """
    if not amount > 0.0:
        raise ValueError("trade amount must be > 0")
    d = dim_index(dimension)
    absorb = 1.0 - receiver.expertise[d]
    return weight * amount * (receiver.unit_cost * absorb - sender.transfer_efficiency * sender.unit_cost)


def trade_delta(state: MarketState, sender: str, receiver: str, dimension: str | int, amount: float, params: MarketParams) -> float:
    """Full system cost change of a trade, fixed-cost switches included."""
    s, r, d = state.index(sender), state.index(receiver), dim_index(dimension)
    h = state.holdings
    ps, pr = state.agents[s], state.agents[r]
    absorb = 1.0 - pr.expertise[d]
    delta = params.weights.as_tuple()[d] * amount * (pr.unit_cost * absorb - ps.transfer_efficiency * ps.unit_cost)
    sender_after = float(h[s, d]) - ps.transfer_efficiency * amount
    if sender_after == 0.0 and all(h[s, e] == 0.0 for e in range(3) if e != d):
        delta = delta - ps.fixed_cost
    if float(h[r, d]) + absorb * amount > 0.0 and all(h[r, e] == 0.0 for e in range(3)):
        delta = delta + pr.fixed_cost
    return delta


def admissibility_conditions(proposal: TradeProposal, state: MarketState, params: MarketParams) -> dict[str, bool]:
    """Each gate of the protocol evaluated on its own."""
    s, r, d = state.index(proposal.sender), state.index(proposal.receiver), dim_index(proposal.dimension)
    hs, hr = float(state.holdings[s, d]), float(state.holdings[r, d])
    receiver = state.agents[r]
    inc = (1.0 - receiver.expertise[d]) if params.use_effective_capacity else 1.0
    amount = proposal.amount
    sized = s != r and 0.0 < amount <= hs
    delta = trade_delta(state, proposal.sender, proposal.receiver, d, amount, params) if sized else 0.0
    return {
        "trigger": hs - hr > params.tau_trade,
        "capacity": sized and hr + inc * amount <= receiver.capacity[d],
        "profitable": sized and delta < -params.delta_min,
        "benefit": sized and -delta >= params.tau_benefit,
    }


def is_admissible(proposal: TradeProposal, state: MarketState, params: MarketParams) -> bool:
    return all(admissibility_conditions(proposal, state, params).values())


def find_most_profitable_trade(state: MarketState, params: MarketParams, backend: str | None = None) -> TradeProposal | None:
    """Lowest-delta admissible trade at maximal size; ties go to the smallest (sender, receiver, dimension)."""
    found = kernel.best_trade(
        state.packed(params), params.tau_trade, params.tau_benefit, params.delta_min,
        params.use_effective_capacity, backend=backend,
    )
    if found is None:
        return None
    s, r, d, amount, delta = found
    return TradeProposal(state.agents[s].id, state.agents[r].id, DIMENSIONS[d], amount, delta)


def execute_trade(state: MarketState, proposal: TradeProposal, params: MarketParams = MarketParams()) -> MarketState:
    """Apply an admissible trade, returning the successor state."""
    if not is_admissible(proposal, state, params):
        failed = [k for k, ok in admissibility_conditions(proposal, state, params).items() if not ok]
        raise InadmissibleTrade(f"trade {proposal} fails: {', '.join(failed)}")
    s, r, d = state.index(proposal.sender), state.index(proposal.receiver), dim_index(proposal.dimension)
    delta = trade_delta(state, proposal.sender, proposal.receiver, d, proposal.amount, params)
    sender, receiver = state.agents[s], state.agents[r]
    h = state.holdings.copy()
    h[s, d] = float(h[s, d]) - sender.transfer_efficiency * proposal.amount
    h[r, d] = float(h[r, d]) + (1.0 - receiver.expertise[d]) * proposal.amount
    entry = LedgerEntry(state.tick, sender.id, receiver.id, DIMENSIONS[d], proposal.amount, delta)
    return MarketState(state.agents, state.base, h, state.ledger + (entry,), state.tick + 1)


class MarketPhaseResult(NamedTuple):
    state: MarketState
    trade_count: int
    truncated: bool


def run_market_phase(state: MarketState, params: MarketParams, max_trades: int = 10_000, backend: str | None = None) -> MarketPhaseResult:
    """Greedy descent: execute the best admissible trade until equilibrium or ``max_trades``."""
    if max_trades < 1:
        raise ValueError("max_trades must be positive")
    count = 0
    while True:
        proposal = find_most_profitable_trade(state, params, backend=backend)
        if proposal is None:
            return MarketPhaseResult(state, count, False)
        if count >= max_trades:
            log.warning("market phase truncated after %d trades with profitable trades left", count)
            return MarketPhaseResult(state, count, True)
        state = execute_trade(state, proposal, params)
        count += 1


def system_cost(state: MarketState, w: DimensionWeights = DEFAULT_WEIGHTS) -> float:
    """Sum of every agent's processing cost on its current portfolio."""
    total = 0.0
    for i, agent in enumerate(state.agents):
        total += processing_cost(agent, [float(x) for x in state.holdings[i]], w)
    return total


def system_uncertainty(state: MarketState) -> np.ndarray:
    """Per-dimension uncertainty summed over all agents."""
    return state.holdings.sum(axis=0)


def strategic_uncertainty(agent_id: str, state: MarketState, params: MarketParams, backend: str | None = None) -> float:
    """Expected net cost saving from every admissible trade the agent could take part in.

    The market is deterministic, so each admissible trade counts with
    probability one.
    """
    return kernel.strategic_savings(
        state.packed(params), params.tau_trade, params.tau_benefit, params.delta_min,
        params.use_effective_capacity, state.index(agent_id), backend=backend,
    )


def per_dimension_cost(agent: AgentProfile, dimension: str | int) -> float:
    return agent.unit_cost / max(agent.expertise[dim_index(dimension)], CAI_EXPERTISE_FLOOR)


def comparative_advantage_from_costs(ci_d1: float, ci_d2: float, cj_d1: float, cj_d2: float) -> float:
    if min(ci_d1, ci_d2, cj_d1, cj_d2) <= 0.0:
        raise ValueError("per-dimension costs must be > 0")
    return (ci_d1 / ci_d2) / (cj_d1 / cj_d2)


def comparative_advantage_index(a_i: AgentProfile, a_j: AgentProfile, d1: str | int, d2: str | int) -> float:
    """Below 1 when ``a_i`` holds the comparative advantage in ``d1`` relative to ``d2``."""
    return comparative_advantage_from_costs(
        per_dimension_cost(a_i, d1), per_dimension_cost(a_i, d2),
        per_dimension_cost(a_j, d1), per_dimension_cost(a_j, d2),
    )


def replay_ledger(initial: MarketState, ledger: Iterable[LedgerEntry]) -> np.ndarray:
    """Fold ledger entries over the initial holdings."""
    h = initial.holdings.copy()
    for entry in ledger:
        s, r, d = initial.index(entry.sender), initial.index(entry.receiver), dim_index(entry.dimension)
        h[s, d] = float(h[s, d]) - initial.agents[s].transfer_efficiency * entry.amount
        h[r, d] = float(h[r, d]) + (1.0 - initial.agents[r].expertise[d]) * entry.amount
    return h


def write_ledger_csv(ledger: Iterable[LedgerEntry], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LEDGER_COLUMNS)
    for e in ledger:
        writer.writerow([e.tick, e.sender, e.receiver, e.dimension, repr(e.amount), repr(e.cost_delta)])


def ledger_csv(ledger: Iterable[LedgerEntry]) -> str:
    buf = io.StringIO()
    write_ledger_csv(ledger, buf)
    return buf.getvalue()


def read_ledger_csv(text: str) -> list[LedgerEntry]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != LEDGER_COLUMNS:
        raise ValueError(f"ledger header must be {','.join(LEDGER_COLUMNS)}")
    return [LedgerEntry(int(t), s, r, d, float(a), float(c)) for t, s, r, d, a, c in rows[1:]]


def conservation_factor(receiver: AgentProfile, sender: AgentProfile, dimension: str | int) -> float:
    """Net change in system uncertainty per unit traded."""
    return 1.0 - receiver.expertise[dim_index(dimension)] - sender.transfer_efficiency


def is_finite_state(state: MarketState) -> bool:
    return bool(np.all(np.isfinite(state.holdings)))


__all__ = [
    "InadmissibleTrade",
    "LEDGER_COLUMNS",
    "MarketParams",
    "MarketPhaseResult",
    "MarketState",
    "TradeProposal",
    "admissibility_conditions",
    "comparative_advantage_from_costs",
    "comparative_advantage_index",
    "conservation_factor",
    "cost_delta",
    "execute_trade",
    "find_most_profitable_trade",
    "is_admissible",
    "ledger_csv",
    "read_ledger_csv",
    "replay_ledger",
    "run_market_phase",
    "strategic_uncertainty",
    "system_cost",
    "system_uncertainty",
    "trade_delta",
    "write_ledger_csv",
]
