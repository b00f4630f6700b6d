import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from agora.uncertainty import (
    DEFAULT_WEIGHTS, DimensionWeights, SimplexError, UncertaintyVector, decompose, inferential_uncertainty,
    normalized_entropy, perceptual_uncertainty, semantic_uncertainty, total_uncertainty,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_perceptual_examples():
    assert perceptual_uncertainty([0.5, 0.5]) == pytest.approx(1.0, abs=1e-15)
    assert perceptual_uncertainty([1.0, 0.0, 0.0]) == 0.0
    p = [0.7, 0.2, 0.1]
    oracle = -sum(x * math.log(x) for x in p) / math.log(3)
    assert perceptual_uncertainty(p) == pytest.approx(oracle, abs=1e-12)
    assert round(perceptual_uncertainty(p), 4) == 0.7298


def test_perceptual_single_class_is_zero():
    assert perceptual_uncertainty([1.0]) == 0.0


@pytest.mark.parametrize("bad", [[], [0.6, 0.5], [-0.1, 1.1], [float("nan"), 1.0]])
def test_perceptual_rejects_non_simplex(bad):
    with pytest.raises(SimplexError):
        perceptual_uncertainty(bad)


def test_semantic_examples():
    assert semantic_uncertainty([], 1.0, 0.01) == 0.0
    with pytest.raises(ValueError):
        semantic_uncertainty([(1.0, 0.5)], 1.0, 0.0)
    assert semantic_uncertainty([(0.5, 0.4), (0.5, 0.8)], 1.0, 0.2) == pytest.approx((0.2 + 0.4) / 1.2, abs=1e-15)


def test_semantic_clamps_to_unit_interval():
    assert semantic_uncertainty([(5.0, 5.0)], 1.0, 0.01) == 1.0


def test_inferential_examples():
    assert inferential_uncertainty([1.0], 0.5) == 0.0
    assert inferential_uncertainty([0.5, 0.5], 1.0) == 0.5
    assert inferential_uncertainty([0.5, 0.5], 0.3) == pytest.approx(0.3 * 0.5 + 0.7 * 1.0, abs=1e-15)


def test_decompose_examples():
    d = decompose(UncertaintyVector(0.6, 0.4, 0.2), 0.0, 0.0)
    assert d.epistemic.as_tuple() == (0.6, 0.4, 0.2) and d.aleatoric.as_tuple() == (0.0, 0.0, 0.0)
    d = decompose(UncertaintyVector(0.6, 0.4, 0.2), 0.0, 1.0)
    assert d.epistemic.as_tuple() == (0.0, 0.0, 0.0) and d.aleatoric.as_tuple() == (0.6, 0.4, 0.2)
    d = decompose(UncertaintyVector(0.8, 0.0, 0.0), 0.0, 0.25)
    assert d.epistemic.as_tuple() == pytest.approx((0.6, 0.0, 0.0), abs=1e-15)
    assert d.aleatoric.as_tuple() == pytest.approx((0.2, 0.0, 0.0), abs=1e-15)


@pytest.mark.parametrize("gap,rand", [(-0.1, 0.0), (0.0, 1.5)])
def test_decompose_rejects_out_of_range_cues(gap, rand):
    with pytest.raises(ValueError):
        decompose(UncertaintyVector(0.5, 0.5, 0.5), gap, rand)


def test_total_examples():
    assert total_uncertainty(UncertaintyVector(1, 1, 1), DEFAULT_WEIGHTS) == pytest.approx(1.0, abs=1e-15)
    assert total_uncertainty(UncertaintyVector(0, 0, 0), DimensionWeights(0.2, 0.3, 0.5)) == 0.0
    assert total_uncertainty(UncertaintyVector(0.5, 0.2, 0.8)) == pytest.approx(0.2 + 0.06 + 0.24, abs=1e-15)


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        DimensionWeights(0.5, 0.3, 0.3)
    with pytest.raises(ValueError):
        DimensionWeights(1.2, -0.1, -0.1)


def test_vector_rejects_negative_and_nan():
    with pytest.raises(ValueError):
        UncertaintyVector(-0.1, 0, 0)
    with pytest.raises(ValueError):
        UncertaintyVector(float("nan"), 0, 0)


@given(st.tuples(unit, unit, unit), st.tuples(unit, unit, unit), st.floats(0, 5), st.floats(0, 5))
def test_vector_algebra_closed_and_commutative(a, b, s, t):
    u, v = UncertaintyVector(*a), UncertaintyVector(*b)
    assert (u + v) == (v + u)
    assert (u * s) == (s * u)
    assert all(x >= 0 for x in (u * s + v * t))


@pytest.mark.parametrize("k", range(2, 17))
def test_perceptual_max_exactly_at_uniform(k):
    assert perceptual_uncertainty([1.0 / k] * k) == pytest.approx(1.0, abs=1e-12)
    # grid of non-uniform distributions stays strictly below 1
    rng = np.random.default_rng(k)
    for _ in range(200):
        p = rng.dirichlet(np.ones(k))
        if np.max(np.abs(p - 1.0 / k)) > 1e-3:
            assert perceptual_uncertainty(list(p)) < 1.0


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8).filter(lambda xs: sum(xs) > 0.1))
def test_perceptual_permutation_invariant(xs):
    p = [x / sum(xs) for x in xs]
    base = perceptual_uncertainty(p)
    for perm in itertools.islice(itertools.permutations(p), 20):
        assert perceptual_uncertainty(list(perm)) == pytest.approx(base, abs=1e-12)


@given(st.floats(0.5, 1.0), st.floats(0.5, 1.0), st.floats(0.0, 1.0))
def test_inferential_monotone_in_max_prob(p1, p2, weight):
    lo, hi = sorted((p1, p2))
    assert inferential_uncertainty([hi, 1 - hi], weight) <= inferential_uncertainty([lo, 1 - lo], weight) + 1e-12


def test_decompose_reconstruction_randomized():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        total = UncertaintyVector(*rng.uniform(0, 1, 3))
        d = decompose(total, float(rng.uniform()), float(rng.uniform()))
        for e, a, t in zip(d.epistemic, d.aleatoric, total):
            assert abs(e + a - t) <= 1e-9
            assert e >= 0 and a >= 0


@given(st.tuples(unit, unit, unit), st.tuples(unit, unit, unit), st.floats(0, 10), st.floats(0, 10))
def test_total_is_linear(a, b, s, t):
    u, v = UncertaintyVector(*a), UncertaintyVector(*b)
    lhs = total_uncertainty(u * s + v * t)
    assert lhs == pytest.approx(s * total_uncertainty(u) + t * total_uncertainty(v), rel=1e-12, abs=1e-12)


def test_entropy_zero_probabilities_contribute_nothing():
    assert normalized_entropy([0.5, 0.5, 0.0, 0.0]) == pytest.approx(math.log(2) / math.log(4))
