"""Proximal causal inference via neural maximum moment restriction.

Estimates average potential outcomes under unmeasured confounding by
training a neural bridge function with U-/V-statistic kernel losses on
synthetic benchmarks, alongside linear and naive baselines.
"""

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    GraphError,
    ProxmmrError,
    TrainingError,
)
from .tensor import Rng, Tensor

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionError",
    "DomainError",
    "GraphError",
    "ProxmmrError",
    "Rng",
    "Tensor",
    "TrainingError",
    "__version__",
]
