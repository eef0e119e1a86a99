"""Scenario files, presets and the runner behind the command line."""

from .presets import example_names, example_path, list_presets
from .runner import EXIT_FAIL, EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, RunOutcome, run_scenario
from .schema import Scenario, ScenarioError, load_scenario, parse_scenario, validate_report

__all__ = [
    "EXIT_FAIL",
    "EXIT_INVALID",
    "EXIT_NUMERICAL",
    "EXIT_OK",
    "RunOutcome",
    "Scenario",
    "ScenarioError",
    "example_names",
    "example_path",
    "list_presets",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "validate_report",
]
