"""Uncertainty-trading market for multi-agent task coordination."""

from .agents import AgentProfile, SyntheticBackend, TaskInstance
from .broker import BrokerParams, BrokerState, select_initial_agent
from .harness import generate_tasks, run_comparison, run_episode
from .kernel import BACKEND as KERNEL_BACKEND
from .market import MarketParams, MarketState, run_market_phase, system_cost
from .report import EpisodeReport
from .scenario import ScenarioConfig, load_scenario, validate_file
from .uncertainty import DimensionWeights, UncertaintyVector

__version__ = "0.1.0"

__all__ = [
    "AgentProfile",
    "BrokerParams",
    "BrokerState",
    "DimensionWeights",
    "EpisodeReport",
    "KERNEL_BACKEND",
    "MarketParams",
    "MarketState",
    "ScenarioConfig",
    "SyntheticBackend",
    "TaskInstance",
    "UncertaintyVector",
    "generate_tasks",
    "load_scenario",
    "run_comparison",
    "run_episode",
    "run_market_phase",
    "select_initial_agent",
    "system_cost",
    "validate_file",
]
