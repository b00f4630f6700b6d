"""Multi-dimensional cognitive uncertainty: quantification, decomposition, aggregation.

Three dimensions are tracked everywhere in the package, always in this order:

    perc  perceptual uncertainty (what is being seen)
    sem   semantic uncertainty (what it means)
    inf   inferential uncertainty (what follows from it)

Entropies use the natural log and are normalised by ``log(K)`` so each
dimension lives on a shared [0, 1] scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

DIMENSIONS = ("perc", "sem", "inf")
SIMPLEX_TOL = 1e-6


class SimplexError(ValueError):
    """A probability vector is empty, has negative mass, or does not sum to one."""


@dataclass(frozen=True)
class UncertaintyVector:
    perc: float = 0.0
    sem: float = 0.0
    inf: float = 0.0

    def __post_init__(self):
        for name in DIMENSIONS:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"uncertainty component {name} must be finite and >= 0, got {value!r}")

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "UncertaintyVector":
        if len(values) != 3:
            raise ValueError(f"expected 3 components, got {len(values)}")
        return cls(float(values[0]), float(values[1]), float(values[2]))

    @classmethod
    def zeros(cls) -> "UncertaintyVector":
        return cls(0.0, 0.0, 0.0)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.perc, self.sem, self.inf)

    def __getitem__(self, index: int) -> float:
        return self.as_tuple()[index]

    def __iter__(self):
        return iter(self.as_tuple())

    def __add__(self, other: "UncertaintyVector") -> "UncertaintyVector":
        if not isinstance(other, UncertaintyVector):
            return NotImplemented
        return UncertaintyVector(self.perc + other.perc, self.sem + other.sem, self.inf + other.inf)

    def __mul__(self, scalar: float) -> "UncertaintyVector":
        if not isinstance(scalar, (int, float)):
            return NotImplemented
        return UncertaintyVector(self.perc * scalar, self.sem * scalar, self.inf * scalar)

    __rmul__ = __mul__

    def l1(self) -> float:
        return self.perc + self.sem + self.inf

    def clipped(self) -> "UncertaintyVector":
        """Clamp every component into [0, 1]."""
        return UncertaintyVector(*(min(1.0, v) for v in self.as_tuple()))


@dataclass(frozen=True)
class UncertaintyDecomposition:
    epistemic: UncertaintyVector
    aleatoric: UncertaintyVector

    @property
    def total(self) -> UncertaintyVector:
        return self.epistemic + self.aleatoric


@dataclass(frozen=True)
class DimensionWeights:
    w_perc: float = 0.4
    w_sem: float = 0.3
    w_inf: float = 0.3

    def __post_init__(self):
        for value in self.as_tuple():
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"dimension weight {value!r} outside [0, 1]")
        if abs(sum(self.as_tuple()) - 1.0) > 1e-9:
            raise ValueError(f"dimension weights must sum to 1 (got {sum(self.as_tuple())!r})")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_perc, self.w_sem, self.w_inf)


DEFAULT_WEIGHTS = DimensionWeights()


def _check_simplex(probs: Sequence[float], name: str) -> list[float]:
    p = [float(x) for x in probs]
    if not p:
        raise SimplexError(f"{name}: empty probability vector")
    if any(not math.isfinite(x) or x < 0.0 for x in p):
        raise SimplexError(f"{name}: components must be finite and >= 0")
    if abs(math.fsum(p) - 1.0) > SIMPLEX_TOL:
        raise SimplexError(f"{name}: components sum to {math.fsum(p)!r}, not 1")
    return p


def normalized_entropy(probs: Sequence[float]) -> float:
    """Shannon entropy divided by log(K); 0 for a single outcome. 0*log 0 is 0."""
    p = _check_simplex(probs, "probs")
    if len(p) == 1:
        return 0.0
    h = -math.fsum(x * math.log(x) for x in p if x > 0.0)
    return min(1.0, max(0.0, h / math.log(len(p))))


def perceptual_uncertainty(class_probs: Sequence[float]) -> float:
    """Normalised entropy of the class distribution."""
    return normalized_entropy(class_probs)


def semantic_uncertainty(
    ambiguity_scores: Iterable[tuple[float, float]],
    complexity: float,
    smoothing: float,
) -> float:
    """Weighted ambiguity per semantic element, smoothed, clamped to [0, 1].

    ``ambiguity_scores`` holds ``(weight, ambiguity)`` pairs, one per semantic
    type; ``complexity`` is the number of semantic elements in the response.
    """
    if not smoothing > 0.0:
        raise ValueError("smoothing must be > 0")
    if not complexity > 0.0:
        raise ValueError("complexity must be > 0")
    numerator = 0.0
    for weight, ambiguity in ambiguity_scores:
        if weight < 0.0 or ambiguity < 0.0:
            raise ValueError("semantic weights and ambiguities must be >= 0")
        numerator += weight * ambiguity
    return min(1.0, numerator / (complexity + smoothing))


def inferential_uncertainty(outcome_probs: Sequence[float], margin_weight: float) -> float:
    """Blend of the top-outcome shortfall ``1 - max p`` and normalised entropy.

    ``margin_weight`` goes to the shortfall, the remainder to the entropy.
    """
    if not (0.0 <= margin_weight <= 1.0):
        raise ValueError("margin_weight must lie in [0, 1]")
    p = _check_simplex(outcome_probs, "outcome_probs")
    value = margin_weight * (1.0 - max(p)) + (1.0 - margin_weight) * normalized_entropy(p)
    return min(1.0, max(0.0, value))


def decompose(
    total: UncertaintyVector,
    knowledge_gap_cue: float,
    randomness_signal: float,
) -> UncertaintyDecomposition:
    """Split ``total`` into a tradable epistemic part and a fixed aleatoric part.

    Per dimension the epistemic share is ``(1 - randomness) * total`` plus an
    additive ``knowledge_gap_cue``, capped at ``total``; the aleatoric part is
    the remainder, so the two always reconstruct ``total``.
    """
    for name, cue in (("knowledge_gap_cue", knowledge_gap_cue), ("randomness_signal", randomness_signal)):
        if not (0.0 <= cue <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {cue!r}")
    epis = []
    alea = []
    for t in total.as_tuple():
        e = min(t, (1.0 - randomness_signal) * t + knowledge_gap_cue) if t > 0.0 else 0.0
        epis.append(e)
        alea.append(max(0.0, t - e))
    return UncertaintyDecomposition(UncertaintyVector(*epis), UncertaintyVector(*alea))


def total_uncertainty(u: UncertaintyVector | Sequence[float], w: DimensionWeights = DEFAULT_WEIGHTS) -> float:
    """Weighted sum of the three components. Not clamped."""
    a, b, c = u.as_tuple() if isinstance(u, UncertaintyVector) else u
    return w.w_perc * a + w.w_sem * b + w.w_inf * c
