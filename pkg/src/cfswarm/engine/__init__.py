"""Scenario configuration, Monte Carlo orchestration and architecture calculators."""

from .arch import LatencyBudget, aging_interval, signalling_overhead
from .config import ConfigError, ScenarioConfig, from_dict, load_config
from .runner import RunError, RunResult, SweepResult, full_grid, run_scenario, sweep

__all__ = [
    "ConfigError", "LatencyBudget", "RunError", "RunResult", "ScenarioConfig", "SweepResult",
    "aging_interval", "from_dict", "load_config", "full_grid", "run_scenario", "signalling_overhead",
    "sweep",
]
