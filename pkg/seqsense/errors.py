"""Exception hierarchy shared by the seqsense modules."""

from __future__ import annotations

from typing import Any, Optional


class SeqSenseError(Exception):
    """Base class for all errors raised by seqsense."""


class ConfigurationError(SeqSenseError, ValueError):
    """Invalid parameters, unseparated hypotheses or wrong-sign drifts."""


class UnsupportedOperationError(SeqSenseError):
    """The requested quantity is not available for this law."""


class DomainError(SeqSenseError, ValueError):
    """Preconditions of a bound or approximation formula are violated."""


class ContractViolation(SeqSenseError, ValueError):
    """Caller broke an argument contract (e.g. wrong block length)."""


class ApproximationDivergence(DomainError):
    """No drift phase reaches the barrier; the approximation does not apply."""


class CalibrationFailure(SeqSenseError):
    """Targets could not be met on the threshold grid."""

    def __init__(self, message: str, closest: Optional[Any] = None):
        super().__init__(message)
        self.closest = closest
