"""Exception hierarchy shared by the library and the command-line tool."""
from __future__ import annotations

__all__ = [
    "OneShotError",
    "DomainError",
    "DataError",
    "NumericalError",
    "SingularMatrixError",
]


class OneShotError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(OneShotError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class DataError(OneShotError, ValueError):
    """A test plan, data file or constraint violates its invariants."""


class NumericalError(OneShotError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class SingularMatrixError(NumericalError):
    """A matrix that must be inverted is singular or too ill-conditioned."""
