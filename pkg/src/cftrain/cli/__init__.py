"""Configuration parsing, experiment orchestration and report output."""

from .config import ExperimentConfig, dump_config, parse_config
from .experiment import run, run_experiment
from .main import main

__all__ = ["ExperimentConfig", "dump_config", "main", "parse_config", "run", "run_experiment"]
