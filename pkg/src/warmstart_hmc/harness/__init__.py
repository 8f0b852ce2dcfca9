"""Experiment harness: configuration, execution, CSV/manifest output and reporting."""

from .config import EXPERIMENTS, ExperimentConfig, parse_text, serialize
from .experiments import Criterion, evaluate, expand_arms
from .runner import EXIT_FAIL, EXIT_OK, EXIT_USAGE, report, run, run_experiment

__all__ = ["EXPERIMENTS", "ExperimentConfig", "parse_text", "serialize", "Criterion", "evaluate", "expand_arms",
           "EXIT_FAIL", "EXIT_OK", "EXIT_USAGE", "report", "run", "run_experiment"]
