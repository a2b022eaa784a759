"""Exception hierarchy shared by all solvers and drivers."""

from __future__ import annotations


class StiffPressureError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(StiffPressureError):
    """A model or scheme parameter violates its documented range."""


class InvalidDataError(StiffPressureError):
    """Field data violate a precondition (range, shape, finiteness)."""


class TransformRangeError(StiffPressureError):
    """Argument lies outside the invertible range of a transform."""


class StepFailureError(StiffPressureError):
    """An implicit step did not converge.

    Carries the final residual sup-norm so callers can report it.
    """

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class NumericalBlowupError(StiffPressureError):
    """Non-finite values appeared during time stepping."""


class ProjectionFailureError(StepFailureError):
    """Newton iteration for the initial elliptic projection stalled."""


class ConstructionFailureError(StiffPressureError):
    """A barrier profile construction did not converge."""


class ConfigError(StiffPressureError):
    """Run-configuration problem; ``line_no`` is 1-based, 0 = whole file."""

    def __init__(self, message: str, line_no: int = 0):
        prefix = f"line {line_no}: " if line_no else ""
        super().__init__(prefix + message)
        self.line_no = line_no
