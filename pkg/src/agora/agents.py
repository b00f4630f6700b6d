"""Agent profiles, portfolios, tasks, and the evaluation backend abstraction."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .uncertainty import (
    DEFAULT_WEIGHTS,
    DIMENSIONS,
    DimensionWeights,
    UncertaintyDecomposition,
    UncertaintyVector,
    inferential_uncertainty,
    perceptual_uncertainty,
    semantic_uncertainty,
    total_uncertainty,
)

N_CLASSES = 4
N_OUTCOMES = 3
# Logit margin granted to the favoured class by a fully skilled agent.
SHARPNESS = 12.0
LOGIT_NOISE = 0.1


class BackendError(Exception):
    """Base class for evaluation failures."""


class TransportError(BackendError):
    """The backend could not be reached; the call may be retried."""


class ProtocolViolation(BackendError):
    """The backend answered with something malformed; fatal for that task."""


def _vec3(values, name: str) -> tuple[float, float, float]:
    values = tuple(float(v) for v in values)
    if len(values) != 3:
        raise ValueError(f"{name} must have 3 components")
    return values


@dataclass(frozen=True)
class AgentProfile:
    id: str
    unit_cost: float
    expertise: tuple[float, float, float] = (0.0, 0.0, 0.0)
    capacity: tuple[float, float, float] = (1.0, 1.0, 1.0)
    fixed_cost: float = 0.0
    tflops_per_token: float = 1.0
    transfer_efficiency: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "expertise", _vec3(self.expertise, "expertise"))
        object.__setattr__(self, "capacity", _vec3(self.capacity, "capacity"))
        if not self.unit_cost > 0.0:
            raise ValueError(f"agent {self.id}: unit cost c must be > 0")
        if any(not (0.0 <= x <= 1.0) for x in self.expertise):
            raise ValueError(f"agent {self.id}: expertise components must lie in [0, 1]")
        if any(not x > 0.0 for x in self.capacity):
            raise ValueError(f"agent {self.id}: capacity components must be > 0")
        if self.fixed_cost < 0.0:
            raise ValueError(f"agent {self.id}: fixed cost must be >= 0")
        if not self.tflops_per_token > 0.0:
            raise ValueError(f"agent {self.id}: tflops_per_token must be > 0")
        if not (0.0 <= self.transfer_efficiency <= 1.0):
            raise ValueError(f"agent {self.id}: transfer efficiency must lie in [0, 1]")


@dataclass(frozen=True)
class AgentPortfolio:
    """Self-generated uncertainty plus the signed net of all transfers."""

    base: UncertaintyVector
    net_transferred: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def total(self) -> UncertaintyVector:
        return portfolio_total(self)


@dataclass(frozen=True)
class LedgerEntry:
    tick: int
    sender: str
    receiver: str
    dimension: str
    amount: float
    cost_delta: float


@dataclass(frozen=True)
class TaskInstance:
    id: str
    initial_uncertainty: UncertaintyDecomposition
    feature_vector: tuple[float, ...] = ()
    max_reward: float = 1.0
    ground_truth_label: int = 0

    @property
    def epistemic(self) -> UncertaintyVector:
        return self.initial_uncertainty.epistemic

    @property
    def dominant_dimension(self) -> int:
        values = self.epistemic.as_tuple()
        return values.index(max(values))


@dataclass(frozen=True)
class AgentResponse:
    class_probs: tuple[float, ...]
    outcome_probs: tuple[float, ...]
    semantic_ambiguities: tuple[tuple[float, float], ...]
    tokens_generated: int


def portfolio_total(p: AgentPortfolio) -> UncertaintyVector:
    values = [b + n for b, n in zip(p.base.as_tuple(), p.net_transferred)]
    # Clears the -0.0/-1e-17 left behind when a full holding is shipped out.
    return UncertaintyVector(*(0.0 if abs(v) < 1e-15 else v for v in values))


def is_active(u: UncertaintyVector | Sequence[float]) -> bool:
    return any(x > 0.0 for x in u)


def processing_cost(profile: AgentProfile, u: UncertaintyVector | Sequence[float], w: DimensionWeights = DEFAULT_WEIGHTS) -> float:
    """Variable cost ``c * weighted total`` plus the fixed cost when the agent holds anything."""
    if not is_active(u):
        return 0.0
    return profile.unit_cost * total_uncertainty(u, w) + profile.fixed_cost


def stable_hash(*parts: object) -> int:
    """Process-independent 32-bit hash (``hash()`` is salted per interpreter)."""
    return zlib.crc32("\x1f".join(str(p) for p in parts).encode("utf-8"))


def synthetic_label(task_id: str) -> int:
    return stable_hash("label", task_id) % N_CLASSES


def _softmax(logits: np.ndarray) -> tuple[float, ...]:
    z = logits - logits.max()
    e = np.exp(z)
    p = e / e.sum()
    return tuple(float(x) for x in p)


def synthetic_response(
    seed: int,
    agent: AgentProfile,
    task_id: str,
    declared_uncertainty: Sequence[float],
    tokens: int,
) -> AgentResponse:
    """Deterministic stand-in for a model call.

    Output sharpness grows with the agent's expertise in the task's dominant
    uncertainty dimension. Everything is a function of the arguments, so the
    same answer comes back in-process or over the wire.
    """
    declared = [float(x) for x in declared_uncertainty]
    dominant = declared.index(max(declared))
    skill = agent.expertise[dominant]
    rng = np.random.default_rng([seed & 0xFFFFFFFF, stable_hash(agent.id), stable_hash(task_id)])
    label = synthetic_label(task_id)

    class_logits = rng.normal(0.0, LOGIT_NOISE, N_CLASSES)
    class_logits[label] += SHARPNESS * skill
    outcome_logits = rng.normal(0.0, LOGIT_NOISE, N_OUTCOMES)
    outcome_logits[label % N_OUTCOMES] += SHARPNESS * skill
    raw = rng.uniform(0.0, 1.0, 2)
    ambiguities = tuple((0.5, float((1.0 - skill) * a)) for a in raw)
    return AgentResponse(
        class_probs=_softmax(class_logits),
        outcome_probs=_softmax(outcome_logits),
        semantic_ambiguities=ambiguities,
        tokens_generated=int(tokens),
    )


class Backend(Protocol):
    def evaluate(self, agent: AgentProfile, task: TaskInstance) -> AgentResponse: ...


@dataclass
class SyntheticBackend:
    seed: int = 0
    tokens_per_task: int = 20
    calls: int = field(default=0, compare=False)

    def evaluate(self, agent: AgentProfile, task: TaskInstance) -> AgentResponse:
        self.calls += 1
        return synthetic_response(self.seed, agent, task.id, task.epistemic.as_tuple(), self.tokens_per_task)


def evaluate(backend: Backend, agent: AgentProfile, task: TaskInstance) -> AgentResponse:
    """Run one evaluation attempt, checking the response shape."""
    response = backend.evaluate(agent, task)
    for name in ("class_probs", "outcome_probs"):
        probs = getattr(response, name)
        if not probs or any(p < 0.0 or not math.isfinite(p) for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-6:
            raise ProtocolViolation(f"{name} is not a probability vector")
    if response.tokens_generated < 0:
        raise ProtocolViolation("tokens_generated must be >= 0")
    return response


def measured_uncertainty(response: AgentResponse, margin_weight: float = 0.5) -> UncertaintyVector:
    """Per-dimension uncertainty the agent exhibits in its own output."""
    return UncertaintyVector(
        perceptual_uncertainty(response.class_probs),
        semantic_uncertainty(response.semantic_ambiguities, 1.0, 0.01),
        inferential_uncertainty(response.outcome_probs, margin_weight),
    )


__all__ = [
    "DIMENSIONS",
    "AgentPortfolio",
    "AgentProfile",
    "AgentResponse",
    "Backend",
    "BackendError",
    "LedgerEntry",
    "ProtocolViolation",
    "SyntheticBackend",
    "TaskInstance",
    "TransportError",
    "evaluate",
    "is_active",
    "measured_uncertainty",
    "portfolio_total",
    "processing_cost",
    "stable_hash",
    "synthetic_label",
    "synthetic_response",
]
