import os

import pytest

from agora import kernel
from agora.agents import AgentProfile

BACKENDS = kernel.available_backends()


@pytest.fixture(params=BACKENDS)
def kernel_backend(request):
    return request.param


@pytest.fixture
def two_agents():
    """Expensive non-expert sender and cheap half-expert receiver."""
    return [
        AgentProfile("a", unit_cost=3.0, expertise=(0.0, 0.0, 0.0), capacity=(10.0, 10.0, 10.0)),
        AgentProfile("b", unit_cost=1.0, expertise=(0.5, 0.0, 0.0), capacity=(10.0, 10.0, 10.0)),
    ]


def pytest_report_header(config):
    forced = os.environ.get("AGORA_KERNEL", "")
    return f"agora trade kernel: {kernel.BACKEND} (available: {', '.join(BACKENDS)}; AGORA_KERNEL={forced!r})"
