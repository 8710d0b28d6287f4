"""Exception types raised by ghzbell."""


class GHZBellError(Exception):
    """Base class for all package errors."""


class UsageError(GHZBellError, ValueError):
    """Invalid arguments (wrong shapes, bit-string lengths, subsets, ranges)."""


class ResourceLimitError(GHZBellError):
    """Requested problem size exceeds a configured limit."""


class ConsistencyError(GHZBellError):
    """An internal invariant was violated, e.g. a correlation table that maps
    to negative probabilities."""


class SolverIndeterminateError(GHZBellError):
    """The feasibility solver stopped without a verified decision."""
