"""Exception hierarchy shared across the package."""


class CayleyLabError(Exception):
    """Base class for all package errors."""


class GroupError(CayleyLabError):
    """Malformed element, mismatched group, or unsupported group operation."""


class BudgetError(CayleyLabError):
    """A memory or support-size budget was exceeded.

    ``reached`` carries the last index (radius or step) that completed
    before the budget tripped.
    """

    def __init__(self, message: str, reached: int = -1):
        super().__init__(message)
        self.reached = reached


class TraceError(CayleyLabError):
    """A walk trace is missing a step or fails a structural invariant."""


class CacheError(CayleyLabError):
    """Cache file is corrupt, has a wrong version, or belongs to another run."""


class ConfigError(CayleyLabError):
    """Invalid run configuration (bad flag value, unparsable group string...)."""
