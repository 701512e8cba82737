"""Semantic exception hierarchy shared by all fbsc modules.

The CLI maps these onto process exit codes (validation -> 2, sizing -> 3,
numeric -> 4); library users can catch them individually.
"""


class FbscError(Exception):
    """Base class for all fbsc errors."""


class ValidationError(FbscError):
    """Malformed input: bad pmf file, inconsistent manifest, domain violation."""


class SizingError(FbscError):
    """A requested exact computation exceeds its configured size budget."""

    def __init__(self, message: str, required: int | None = None, budget: int | None = None):
        super().__init__(message)
        self.required = required
        self.budget = budget


class NumericError(FbscError):
    """A numeric routine failed to reach its contract (tolerance, convergence)."""


class ZeroDispersionError(NumericError):
    """A dispersion-normalized formula was called with zero varentropy.

    Callers should dispatch to the dedicated zero-dispersion region path
    instead of dividing by zero.
    """


class InfeasibleError(FbscError):
    """A design target cannot be met within its search bounds."""
