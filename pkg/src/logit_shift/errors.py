"""Exception hierarchy for score recalibration.

Every error carries the process exit code the CLI uses when it escapes a
command: 2 for bad input data, 3 for numerical failures.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class RecalibrationError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = EXIT_DATA


# --- Data errors ---


class DomainError(RecalibrationError, ValueError):
    """A probability or parameter lies outside its allowed range."""


class SizeError(RecalibrationError, ValueError):
    """An input is larger than the configured computation cap."""


class TargetError(RecalibrationError, ValueError):
    """The observed total admits no interior solution."""

    def __init__(self, message: str, group: str | None = None) -> None:
        if group is not None:
            message = f"group {group!r}: {message}"
        super().__init__(message)
        self.group = group


class MissingTargetError(RecalibrationError, KeyError):
    """A group present in the scores has no observed total."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ParseError(RecalibrationError, ValueError):
    """A score or targets file could not be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# --- Numerical errors ---


class DivisionError(RecalibrationError, ZeroDivisionError):
    """A ratio was requested with a zero-probability denominator."""

    exit_code = EXIT_NUMERICAL


class InstabilityError(RecalibrationError, ArithmeticError):
    """Leave-one-out deconvolution failed every validation attempt."""

    exit_code = EXIT_NUMERICAL


class ConvergenceError(RecalibrationError, ArithmeticError):
    """The swing solver could not bracket or reach the target."""

    exit_code = EXIT_NUMERICAL


class BoundViolationError(RecalibrationError, ArithmeticError):
    """The bound chain around the swing failed beyond its slack."""

    exit_code = EXIT_NUMERICAL


class SamplingError(RecalibrationError, ArithmeticError):
    """A sampler kept producing scores on the boundary of (0, 1)."""

    exit_code = EXIT_NUMERICAL
