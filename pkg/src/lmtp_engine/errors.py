"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class LmtpError(Exception):
    """Base class for all engine errors."""


class ParseError(LmtpError):
    """A data file row could not be parsed."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SchemaError(LmtpError):
    """Column roles do not match the file."""


class ValidationError(LmtpError):
    """Panel data violate a structural invariant (censoring, survival)."""


class UnavailableHistoryError(LmtpError):
    """The requested history is not observed for this unit."""


class ExposureKindError(LmtpError):
    """An exposure value lies outside the declared exposure domain."""


class PolicyError(LmtpError):
    """A policy specification is malformed or inadmissible."""


class NoRandomizerError(PolicyError):
    """A randomizer draw was requested for a rule without a randomizer law."""


class LearnerError(LmtpError):
    """A learner could not be fitted or applied."""


class SignatureError(LearnerError):
    """Prediction features do not match the training signature."""


class EstimationError(LmtpError):
    """An estimator could not produce a value."""


class PositivityError(EstimationError):
    """An estimated probability needed as a divisor is zero."""


class ConvergenceError(EstimationError):
    """An iterative step failed to converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class ConfigError(LmtpError):
    """A run configuration is invalid."""


class DgpError(LmtpError):
    """A data-generating process specification is improper."""
