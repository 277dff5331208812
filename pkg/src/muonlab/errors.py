"""Exception types shared across the library."""

from __future__ import annotations


class MuonlabError(Exception):
    """Base class for all library-specific errors."""


class ShapeError(MuonlabError, ValueError):
    """Operands have incompatible or unsupported shapes."""


class NumericError(MuonlabError, ArithmeticError):
    """A kernel produced or received non-finite values, or failed to converge."""


class DegenerateInputError(MuonlabError, ValueError):
    """Input is structurally unusable (zero matrix, rank-deficient where full rank is required)."""


class RangeError(MuonlabError, ValueError):
    """A scalar argument lies outside its documented range."""


class ConfigError(MuonlabError, ValueError):
    """Invalid run configuration. ``key_path`` points at the offending entry."""

    def __init__(self, message: str, key_path: str | None = None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)
