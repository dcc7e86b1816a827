"""Hierarchical supervision simulations and Price of Governance analysis."""

from govsim.errors import (
    DegenerateNormalizationError,
    FitRejectedError,
    GovsimError,
    InsufficientDataError,
    InvalidParameterError,
    TopologyTooSmallError,
    UndefinedRatioError,
)

__all__ = [
    "DegenerateNormalizationError",
    "FitRejectedError",
    "GovsimError",
    "InsufficientDataError",
    "InvalidParameterError",
    "TopologyTooSmallError",
    "UndefinedRatioError",
]

__version__ = "0.1.0"
