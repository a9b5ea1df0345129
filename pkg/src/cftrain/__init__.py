"""Counterfactual training for classifiers: data, a small numpy network
stack, counterfactual search, training objectives, attacks and evaluation."""

from . import attacks, cegen, data, evaluation, metrics, nn, training
from .errors import ConfigParseError, ConfigurationError, InputError

__version__ = "0.1.0"

__all__ = [
    "ConfigParseError",
    "ConfigurationError",
    "InputError",
    "attacks",
    "cegen",
    "data",
    "evaluation",
    "metrics",
    "nn",
    "training",
]
