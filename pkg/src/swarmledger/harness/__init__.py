"""Scenario construction, simulation loop and command-line entry point."""

from .runner import RunMetrics, RunResult, dump_load, report_merge_progress, run_scenario, write_outputs
from .scenario import ScenarioConfig, load_scenario

__all__ = [
    "RunMetrics", "RunResult", "ScenarioConfig", "dump_load", "load_scenario",
    "report_merge_progress", "run_scenario", "write_outputs",
]
