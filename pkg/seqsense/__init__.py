"""Nonparametric sequential detection and distributed spectrum sensing."""

from .errors import (
    ApproximationDivergence,
    CalibrationFailure,
    ConfigurationError,
    ContractViolation,
    DomainError,
    SeqSenseError,
    UnsupportedOperationError,
)

__version__ = "0.1.0"

__all__ = [
    "ApproximationDivergence",
    "CalibrationFailure",
    "ConfigurationError",
    "ContractViolation",
    "DomainError",
    "SeqSenseError",
    "UnsupportedOperationError",
    "__version__",
]
