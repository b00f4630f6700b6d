"""Scenario files: a versioned JSON schema, a validator that reports every
violation with its field path, and the typed config built from it."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .agents import AgentProfile
from .baselines import KINDS, StrategyConfig
from .broker import METRICS, BrokerParams
from .market import MarketParams
from .uncertainty import DEFAULT_WEIGHTS, DIMENSIONS, DimensionWeights

SCHEMA_VERSION = 1
BUNDLED = ("appendix-e", "theorem1", "default-market")

TOP_KEYS = {"schema_version", "name", "seed", "n_tasks", "tokens_per_task", "epsilon_resolve", "weights",
            "pool", "task_mix", "market", "broker", "strategy", "comparisons", "backend"}
AGENT_KEYS = {"id", "unit_cost", "expertise", "capacity", "fixed_cost", "tflops_per_token", "transfer_efficiency"}
MIX_KEYS = set(DIMENSIONS) | {"randomness", "knowledge_gap", "max_reward"}
MARKET_KEYS = {"tau_trade", "tau_benefit", "delta_min", "use_effective_capacity", "max_trades"}
BROKER_KEYS = {"lambda_dist", "gamma_decay", "eta_synergy", "omega_strategic", "distance_metric",
               "sample_posterior", "prior", "tau_sim"}
STRATEGY_KEYS = {"kind", "agent", "agents", "order", "escalation_threshold", "alpha", "beta_sim",
                 "calibrated_counts", "seed", "label", "reported_accuracy"}
BACKEND_KEYS = {"kind", "endpoints", "timeout_s", "max_retries", "bearer_token"}


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class TaskMix:
    """Uniform ranges per dimension for the pre-split magnitude, plus the
    decomposition cues."""

    perc: tuple[float, float] = (0.05, 0.8)
    sem: tuple[float, float] = (0.05, 0.8)
    inf: tuple[float, float] = (0.05, 0.8)
    randomness: tuple[float, float] = (0.0, 0.3)
    knowledge_gap: tuple[float, float] = (0.0, 0.0)
    max_reward: float = 1.0

    def __post_init__(self):
        for name in (*DIMENSIONS, "randomness", "knowledge_gap"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"task_mix.{name}: need 0 <= low <= high <= 1")
        if not self.max_reward > 0:
            raise ValueError("task_mix.max_reward must be > 0")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "synthetic"
    endpoints: tuple[tuple[str, str], ...] = ()
    timeout_s: float = 30.0
    max_retries: int = 3
    bearer_token: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    pool: tuple[AgentProfile, ...]
    n_tasks: int
    strategy: StrategyConfig
    task_mix: TaskMix = field(default_factory=TaskMix)
    tokens_per_task: int = 20
    weights: DimensionWeights = DEFAULT_WEIGHTS
    market: MarketParams = field(default_factory=MarketParams)
    max_trades: int = 1000
    broker: BrokerParams = field(default_factory=BrokerParams)
    seed: int = 0
    epsilon_resolve: float = 0.5
    name: str = "scenario"
    comparisons: tuple[StrategyConfig, ...] = ()
    backend: BackendConfig = field(default_factory=BackendConfig)
    tau_sim: float = 0.75  # reserved: nothing consumes it

    def __post_init__(self):
        if self.n_tasks < 0:
            raise ValueError("n_tasks must be >= 0")
        if self.tokens_per_task < 1:
            raise ValueError("tokens_per_task must be positive")
        if self.max_trades < 0:
            raise ValueError("max_trades must be >= 0")
        if self.epsilon_resolve < 0:
            raise ValueError("epsilon_resolve must be >= 0")
        if not self.pool:
            raise ValueError("pool must not be empty")
        for strat in (self.strategy, *self.comparisons):
            forced = sum(n for _, n in strat.calibrated_counts)
            if forced > self.n_tasks:
                raise ValueError(f"strategy {strat.name}: calibrated counts total {forced} exceeds n_tasks {self.n_tasks}")
        if self.market.weights != self.weights:
            object.__setattr__(self, "market", MarketParams(
                self.market.tau_trade, self.market.tau_benefit, self.market.delta_min,
                self.market.use_effective_capacity, self.weights))


# --- validation -------------------------------------------------------------

class _Checker:
    def __init__(self):
        self.diags: list[str] = []

    def err(self, path: str, msg: str):
        self.diags.append(f"{path}: {msg}")

    def obj(self, value, path, allowed, required=()):
        if not isinstance(value, dict):
            self.err(path, "expected an object")
            return None
        for k in sorted(set(value) - allowed):
            self.err(f"{path}.{k}" if path else k, "unknown field")
        for k in required:
            if k not in value:
                self.err(f"{path}.{k}" if path else k, "required field missing")
        return value

    def number(self, doc, key, path, *, lo=None, hi=None, lo_open=False, integer=False, why=""):
        if key not in doc:
            return None
        v = doc[key]
        p = f"{path}.{key}" if path else key
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
            self.err(p, "expected an integer" if integer else "expected a number")
            return None
        n_before = len(self.diags)
        self._item(v, p, lo, hi, lo_open, why)
        return v if len(self.diags) == n_before else None

    def boolean(self, doc, key, path):
        if key in doc and not isinstance(doc[key], bool):
            self.err(f"{path}.{key}", "expected true or false")

    def string(self, doc, key, path, choices=None):
        if key not in doc:
            return None
        v = doc[key]
        if not isinstance(v, str) or not v:
            self.err(f"{path}.{key}", "expected a non-empty string")
            return None
        if choices is not None and v not in choices:
            self.err(f"{path}.{key}", f"must be one of {', '.join(choices)}")
        return v

    def vector(self, doc, key, path, length, *, lo=None, hi=None, lo_open=False, why=""):
        if key not in doc:
            return None
        v = doc[key]
        p = f"{path}.{key}"
        if not isinstance(v, list) or len(v) != length:
            self.err(p, f"expected a list of {length} numbers")
            return None
        for i in range(length):
            self._item(v[i], f"{p}[{i}]", lo, hi, lo_open, why)
        return v

    def _item(self, v, p, lo, hi, lo_open, why):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.err(p, "expected a finite number")
            return
        suffix = f" ({why})" if why else ""
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.err(p, f"must be {'>' if lo_open else '>='} {lo}{suffix}")
        if hi is not None and v > hi:
            self.err(p, f"must be <= {hi}{suffix}")


def _check_strategy(c: _Checker, doc, path: str, ids: set[str] | None):
    s = c.obj(doc, path, STRATEGY_KEYS, ("kind",))
    if s is None:
        return
    kind = c.string(s, "kind", path, KINDS)
    c.number(s, "escalation_threshold", path, lo=0.0, hi=1.0)
    c.number(s, "alpha", path, lo=0.0)
    c.number(s, "beta_sim", path, lo=0.0)
    c.number(s, "seed", path, integer=True)
    c.number(s, "reported_accuracy", path, lo=0.0, hi=1.0)
    c.string(s, "label", path)
    refs = []
    if "agent" in s:
        if c.string(s, "agent", path):
            refs.append((f"{path}.agent", s["agent"]))
    elif kind == "single_agent":
        c.err(f"{path}.agent", "required for single_agent")
    for key in ("agents", "order"):
        if key in s:
            if not isinstance(s[key], list) or not all(isinstance(x, str) for x in s[key]):
                c.err(f"{path}.{key}", "expected a list of agent ids")
            else:
                refs += [(f"{path}.{key}[{i}]", x) for i, x in enumerate(s[key])]
    if kind == "top2" and not (isinstance(s.get("agents"), list) and len(s["agents"]) == 2):
        c.err(f"{path}.agents", "top2 needs exactly two agent ids")
    if kind == "tiered_cascade" and not s.get("order"):
        c.err(f"{path}.order", "required for tiered_cascade")
    if "calibrated_counts" in s:
        cc = s["calibrated_counts"]
        if not isinstance(cc, dict):
            c.err(f"{path}.calibrated_counts", "expected an object of agent id to count")
        else:
            for k, v in cc.items():
                c.number(cc, k, f"{path}.calibrated_counts", lo=0, integer=True)
                refs.append((f"{path}.calibrated_counts.{k}", k))
    if ids is not None:
        for p, ref in refs:
            if ref not in ids:
                c.err(p, f"unknown agent id {ref!r} (referenced agent ids must exist in pool)")


def validate_document(doc: Any) -> list[str]:
    """Every schema and invariant violation in ``doc``; empty when it will run."""
    c = _Checker()
    top = c.obj(doc, "", TOP_KEYS, ("schema_version", "pool", "n_tasks", "strategy"))
    if top is None:
        return c.diags
    if "schema_version" in top and top["schema_version"] != SCHEMA_VERSION:
        c.err("schema_version", f"unsupported version {top['schema_version']!r}, expected {SCHEMA_VERSION}")
    c.string(top, "name", "")
    c.number(top, "seed", "", integer=True)
    c.number(top, "n_tasks", "", lo=0, integer=True)
    c.number(top, "tokens_per_task", "", lo=1, integer=True)
    c.number(top, "epsilon_resolve", "", lo=0.0)

    if "weights" in top:
        w = c.obj(top["weights"], "weights", set(DIMENSIONS), DIMENSIONS)
        if w is not None:
            vals = [c.number(w, d, "weights", lo=0.0, hi=1.0) for d in DIMENSIONS]
            if all(isinstance(v, (int, float)) for v in vals) and abs(sum(vals) - 1.0) > 1e-9:
                c.err("weights", f"sum is {sum(vals):g}; DimensionWeights invariant requires sum = 1")

    ids: set[str] | None = None
    if "pool" in top:
        pool = top["pool"]
        if not isinstance(pool, list) or not pool:
            c.err("pool", "expected a non-empty list of agents")
        else:
            ids = set()
            for i, agent in enumerate(pool):
                p = f"pool[{i}]"
                a = c.obj(agent, p, AGENT_KEYS, ("id", "unit_cost"))
                if a is None:
                    continue
                aid = c.string(a, "id", p)
                if aid is not None:
                    if aid in ids:
                        c.err(f"{p}.id", f"duplicate agent id {aid!r}")
                    ids.add(aid)
                c.number(a, "unit_cost", p, lo=0.0, lo_open=True, why="c > 0 required")
                c.vector(a, "expertise", p, 3, lo=0.0, hi=1.0, why="expertise components in [0, 1]")
                c.vector(a, "capacity", p, 3, lo=0.0, lo_open=True, why="capacity components > 0")
                c.number(a, "fixed_cost", p, lo=0.0, why="fixed cost >= 0")
                c.number(a, "tflops_per_token", p, lo=0.0, lo_open=True)
                c.number(a, "transfer_efficiency", p, lo=0.0, hi=1.0, why="transfer efficiency in [0, 1]")

    if "task_mix" in top:
        m = c.obj(top["task_mix"], "task_mix", MIX_KEYS)
        if m is not None:
            for key in (*DIMENSIONS, "randomness", "knowledge_gap"):
                v = c.vector(m, key, "task_mix", 2, lo=0.0, hi=1.0)
                if v is not None and all(isinstance(x, (int, float)) for x in v) and v[0] > v[1]:
                    c.err(f"task_mix.{key}", "low must not exceed high")
            c.number(m, "max_reward", "task_mix", lo=0.0, lo_open=True)

    if "market" in top:
        m = c.obj(top["market"], "market", MARKET_KEYS)
        if m is not None:
            c.number(m, "tau_trade", "market", lo=0.0)
            c.number(m, "tau_benefit", "market", lo=0.0)
            c.number(m, "delta_min", "market", lo=0.0, lo_open=True)
            c.boolean(m, "use_effective_capacity", "market")
            c.number(m, "max_trades", "market", lo=0, integer=True)

    if "broker" in top:
        b = c.obj(top["broker"], "broker", BROKER_KEYS)
        if b is not None:
            c.number(b, "lambda_dist", "broker", lo=0.0)
            c.number(b, "gamma_decay", "broker", lo=0.0, lo_open=True, hi=1.0)
            c.number(b, "eta_synergy", "broker", lo=0.0)
            c.number(b, "omega_strategic", "broker", lo=0.0)
            c.string(b, "distance_metric", "broker", METRICS)
            c.boolean(b, "sample_posterior", "broker")
            c.vector(b, "prior", "broker", 2, lo=0.0, lo_open=True)
            c.number(b, "tau_sim", "broker", lo=0.0, hi=1.0)

    if "strategy" in top:
        _check_strategy(c, top["strategy"], "strategy", ids)
    if "comparisons" in top:
        comps = top["comparisons"]
        if not isinstance(comps, list):
            c.err("comparisons", "expected a list of strategies")
        else:
            for i, s in enumerate(comps):
                _check_strategy(c, s, f"comparisons[{i}]", ids)

    if "backend" in top:
        b = c.obj(top["backend"], "backend", BACKEND_KEYS, ("kind",))
        if b is not None:
            kind = c.string(b, "kind", "backend", ("synthetic", "remote"))
            c.number(b, "timeout_s", "backend", lo=0.0, lo_open=True)
            c.number(b, "max_retries", "backend", lo=0, integer=True)
            c.string(b, "bearer_token", "backend")
            if kind == "remote":
                eps = b.get("endpoints")
                if not isinstance(eps, dict) or not all(isinstance(v, str) for v in eps.values()):
                    c.err("backend.endpoints", "remote backend needs an object of agent id to URL")
                elif ids is not None:
                    for aid in sorted(ids - set(eps)):
                        c.err("backend.endpoints", f"no endpoint for agent {aid!r}")

    if not c.diags:
        # Whatever the field checks missed, the constructors will catch.
        try:
            _build(doc)
        except (ValueError, TypeError, KeyError) as exc:
            c.err("scenario", str(exc))
    return c.diags


# --- construction -----------------------------------------------------------

def _strategy(doc: dict) -> StrategyConfig:
    kw = dict(doc)
    for key in ("agents", "order"):
        if key in kw:
            kw[key] = tuple(kw[key])
    if "calibrated_counts" in kw:
        kw["calibrated_counts"] = tuple(sorted((k, int(v)) for k, v in kw["calibrated_counts"].items()))
    return StrategyConfig(**kw)


def _build(doc: dict) -> ScenarioConfig:
    weights = DEFAULT_WEIGHTS
    if "weights" in doc:
        w = doc["weights"]
        weights = DimensionWeights(w["perc"], w["sem"], w["inf"])
    pool = []
    for a in doc["pool"]:
        kw = dict(a)
        for key in ("expertise", "capacity"):
            if key in kw:
                kw[key] = tuple(float(x) for x in kw[key])
        pool.append(AgentProfile(**kw))
    mix = TaskMix(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.get("task_mix", {}).items()})
    m = dict(doc.get("market", {}))
    max_trades = m.pop("max_trades", 1000)
    market = MarketParams(weights=weights, **m)
    b = dict(doc.get("broker", {}))
    tau_sim = b.pop("tau_sim", 0.75)
    if "prior" in b:
        b["prior"] = tuple(float(x) for x in b["prior"])
    broker = BrokerParams(**b)
    be = dict(doc.get("backend", {"kind": "synthetic"}))
    if "endpoints" in be:
        be["endpoints"] = tuple(sorted(be["endpoints"].items()))
    backend = BackendConfig(**be)
    config = ScenarioConfig(
        pool=tuple(pool),
        n_tasks=doc["n_tasks"],
        strategy=_strategy(doc["strategy"]),
        task_mix=mix,
        tokens_per_task=doc.get("tokens_per_task", 20),
        weights=weights,
        market=market,
        max_trades=max_trades,
        broker=broker,
        seed=doc.get("seed", 0),
        epsilon_resolve=doc.get("epsilon_resolve", 0.5),
        name=doc.get("name", "scenario"),
        comparisons=tuple(_strategy(s) for s in doc.get("comparisons", [])),
        backend=backend,
        tau_sim=tau_sim,
    )
    for strat in (config.strategy, *config.comparisons):
        errors = strat.pool_errors(config.pool)
        if errors:
            raise ValueError("; ".join(errors))
    return config


def build_scenario(doc: Any) -> ScenarioConfig:
    diags = validate_document(doc)
    if diags:
        raise ScenarioError(diags)
    return _build(doc)


def read_document(path: str | Path) -> Any:
    """Parse a scenario file; a bundled name such as ``appendix-e`` also works."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return json.loads(resources.files("agora.scenarios").joinpath(f"{path}.json").read_text())
    text = p.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{p}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None


def validate_file(path: str | Path) -> list[str]:
    try:
        doc = read_document(path)
    except ScenarioError as exc:
        return exc.diagnostics
    return validate_document(doc)


def load_scenario(path: str | Path) -> ScenarioConfig:
    return build_scenario(read_document(path))


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("agora.scenarios").joinpath(f"{name}.json")))
