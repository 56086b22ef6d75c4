"""Scenario runner, invariant suites and the command line."""

from .runner import run_scenario
from .scenario import Scenario, ScenarioError, load, loads
from .suites import run_suite

__all__ = ["Scenario", "ScenarioError", "load", "loads", "run_scenario", "run_suite"]
