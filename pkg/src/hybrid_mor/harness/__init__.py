"""Scenario files, the task runner and the command line interface."""

from .config import Scenario, load_builtin, load_scenario
from .runner import MetricsReport, emit_error_decay, run
