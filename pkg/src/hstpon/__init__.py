"""Deterministic simulator and planner for a cell-less XGS-PON serving high-speed trains."""

from .engine import Simulation, run
from .kernel import Event, EventKind, Kernel, RunConfig
from .metrics import RunReport, interruption_intervals
from .planner import DeploymentPlan, PlannerInput, plan, table1
from .scenario import Scenario, ScenarioError, parse_scenario, parse_scenario_text

__version__ = "0.1.0"

__all__ = [
    "DeploymentPlan",
    "Event",
    "EventKind",
    "Kernel",
    "PlannerInput",
    "RunConfig",
    "RunReport",
    "Scenario",
    "ScenarioError",
    "Simulation",
    "interruption_intervals",
    "parse_scenario",
    "parse_scenario_text",
    "plan",
    "run",
    "table1",
]
