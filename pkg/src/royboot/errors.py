"""Exception types shared across the package."""

from __future__ import annotations


class RoybootError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefiniteError(RoybootError):
    """A matrix required to be positive definite is not.

    Carries the index of the failing Cholesky pivot (0-based) and, when the
    failure occurred on a principal submatrix, the offending support.
    """

    def __init__(self, message: str, pivot_index: int | None = None,
                 support: tuple[int, ...] | None = None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.support = support


class EigenConvergenceError(RoybootError):
    """The eigensolver failed to converge; carries the input norm for context."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class CapExceededError(RoybootError):
    """An enumeration or net-size budget was exceeded; carries the count."""

    def __init__(self, message: str, count: int | None = None):
        super().__init__(message)
        self.count = count


class ParseError(RoybootError):
    """Malformed input file; carries 1-based line (and column when known)."""

    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column


class InvariantError(RoybootError):
    """A domain-type invariant was violated at construction."""
