import numpy as np
import pytest
from hypothesis import given, strategies as st

from agora.agents import (
    AgentPortfolio, AgentProfile, ProtocolViolation, SyntheticBackend, TaskInstance, evaluate,
    measured_uncertainty, portfolio_total, processing_cost, stable_hash, synthetic_label,
)
from agora.uncertainty import DEFAULT_WEIGHTS, UncertaintyDecomposition, UncertaintyVector, perceptual_uncertainty


def make_task(task_id="t0", u=(0.6, 0.3, 0.2)):
    return TaskInstance(task_id, UncertaintyDecomposition(UncertaintyVector(*u), UncertaintyVector.zeros()))


@pytest.mark.parametrize("kwargs", [
    {"unit_cost": 0.0},
    {"unit_cost": -1.0},
    {"unit_cost": 1.0, "expertise": (1.1, 0, 0)},
    {"unit_cost": 1.0, "capacity": (0.0, 1, 1)},
    {"unit_cost": 1.0, "fixed_cost": -0.1},
    {"unit_cost": 1.0, "transfer_efficiency": 1.5},
    {"unit_cost": 1.0, "tflops_per_token": 0.0},
])
def test_profile_invariants(kwargs):
    with pytest.raises(ValueError):
        AgentProfile("x", **kwargs)


def test_portfolio_total_examples():
    assert portfolio_total(AgentPortfolio(UncertaintyVector(0.3, 0, 0), (0, 0, 0))).as_tuple() == (0.3, 0, 0)
    out = portfolio_total(AgentPortfolio(UncertaintyVector(0.3, 0.1, 0), (-0.3, 0, 0.2)))
    assert out.as_tuple() == (0.0, 0.1, 0.2)
    assert portfolio_total(AgentPortfolio(UncertaintyVector.zeros(), (0, 0, 0))).as_tuple() == (0, 0, 0)


def test_processing_cost_examples():
    a = AgentProfile("a", 2.0)
    assert processing_cost(a, UncertaintyVector(0.5, 0.5, 0.5), DEFAULT_WEIGHTS) == pytest.approx(1.0, abs=1e-15)
    assert processing_cost(a, UncertaintyVector.zeros()) == 0.0
    b = AgentProfile("b", 1.0, fixed_cost=0.3)
    assert processing_cost(b, UncertaintyVector(1, 1, 1)) == pytest.approx(1.3, abs=1e-15)
    assert processing_cost(b, UncertaintyVector.zeros()) == 0.0


@given(st.tuples(*[st.floats(0, 1)] * 3), st.integers(0, 2), st.floats(0, 1))
def test_processing_cost_monotone(u, d, bump):
    a = AgentProfile("a", 1.7, fixed_cost=0.2)
    v = list(u)
    v[d] += bump
    assert processing_cost(a, v) >= processing_cost(a, u)


def test_expert_sharp_novice_flat():
    backend = SyntheticBackend(seed=5)
    expert = AgentProfile("e", 1.0, (1.0, 1.0, 1.0))
    novice = AgentProfile("n", 1.0, (0.0, 0.0, 0.0))
    for i in range(50):
        task = make_task(f"t{i}")
        assert perceptual_uncertainty(evaluate(backend, expert, task).class_probs) < 0.05
        assert perceptual_uncertainty(evaluate(backend, novice, task).class_probs) > 0.9


def test_synthetic_is_deterministic():
    a = AgentProfile("a", 1.0, (0.4, 0.6, 0.2))
    t = make_task()
    assert SyntheticBackend(3).evaluate(a, t) == SyntheticBackend(3).evaluate(a, t)
    assert SyntheticBackend(3).evaluate(a, t) != SyntheticBackend(4).evaluate(a, t)


def test_expert_puts_mass_on_label():
    expert = AgentProfile("e", 1.0, (1.0, 1.0, 1.0))
    t = make_task("abc")
    probs = SyntheticBackend(0).evaluate(expert, t).class_probs
    assert int(np.argmax(probs)) == synthetic_label("abc")


def test_evaluate_rejects_bad_backend_output():
    class Broken:
        def evaluate(self, agent, task):
            resp = SyntheticBackend().evaluate(agent, task)
            return type(resp)((0.6, 0.5), resp.outcome_probs, resp.semantic_ambiguities, 20)

    with pytest.raises(ProtocolViolation):
        evaluate(Broken(), AgentProfile("a", 1.0), make_task())


def test_measured_uncertainty_in_unit_cube():
    resp = SyntheticBackend().evaluate(AgentProfile("a", 1.0, (0.3, 0.3, 0.3)), make_task())
    assert all(0.0 <= x <= 1.0 for x in measured_uncertainty(resp))


def test_stable_hash_is_process_independent():
    # crc32 of a fixed string, not Python's salted hash
    assert stable_hash("label", "t0") == stable_hash("label", "t0")
    assert stable_hash("a") == 3904355907
