"""Experiment runner, reports and command line interface."""

from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .experiments import run_experiment
from .report import Report, Row, emit_report, read_report

__all__ = ["ConfigError", "ExperimentConfig", "Report", "Row", "emit_report", "from_dict",
           "load_config", "read_report", "run_experiment"]
