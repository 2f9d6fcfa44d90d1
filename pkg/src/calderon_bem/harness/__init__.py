"""Scenario configuration, runners, verification suites and the command line."""

from .config import ConfigError, ScenarioConfig, load_config, parse_config, sweep_points
from .report import REPORT_VERSION, ReportError, read_report
from .runner import MatvecMismatchError, run_compress, run_solve, run_sweep, solve_config
from .scenarios import build_mesh, build_problem, three_cubes_config

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "load_config",
    "parse_config",
    "sweep_points",
    "REPORT_VERSION",
    "ReportError",
    "read_report",
    "MatvecMismatchError",
    "run_compress",
    "run_solve",
    "run_sweep",
    "solve_config",
    "build_mesh",
    "build_problem",
    "three_cubes_config",
]
