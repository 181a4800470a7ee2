"""Joint energy and bandwidth allocation for energy-harvesting broadcast networks."""

from .model import (
    Allocation,
    RateReport,
    Scenario,
    ScenarioError,
    check_feasible,
    effective_energy,
    evaluate,
    load_scenario,
    save_scenario,
    validate,
)
from .solver import SolveOptions, SolveTrace, reduce_equal_weights, solve

__all__ = [
    "Allocation",
    "RateReport",
    "Scenario",
    "ScenarioError",
    "SolveOptions",
    "SolveTrace",
    "check_feasible",
    "effective_energy",
    "evaluate",
    "load_scenario",
    "reduce_equal_weights",
    "save_scenario",
    "solve",
    "validate",
]
