"""Exception hierarchy shared by every module of the lab."""

from __future__ import annotations


class LabError(Exception):
    """Base class for all errors raised by nonlocal_lab."""


class DomainError(LabError, ValueError):
    """An argument lies outside the admissible range of an operation."""


class ConvergenceError(LabError, RuntimeError):
    """A numerical procedure did not reach its tolerance.

    ``value`` and ``err_est`` carry the best result obtained so far.
    """

    def __init__(self, message: str, value: float = float("nan"), err_est: float = float("inf")):
        super().__init__(message)
        self.value = value
        self.err_est = err_est


class IntegrabilityError(ConvergenceError):
    """Shell sums of an improper integral are not Cauchy."""


class KOViolationError(DomainError):
    """A nonlinearity fails a Keller-Osserman type integrability condition."""


class SchemeViolationError(LabError, RuntimeError):
    """A monotone iteration produced a non-monotone sequence beyond tolerance."""


class ResolutionError(ConvergenceError):
    """A truncated series would need more terms than the configured cap."""
