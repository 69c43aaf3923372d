"""Exception types shared across the package."""


class WalklabError(Exception):
    """Base class for all package errors."""


class UsageError(WalklabError):
    """A caller violated a documented precondition."""


class KindMismatchError(UsageError):
    """Elements or measures from different groups were mixed."""


class OutOfRangeError(WalklabError):
    """Metric query outside the enumerated radius.

    ``lower_bound`` is a certified lower bound on the true word length.
    """

    def __init__(self, message: str, lower_bound: int):
        super().__init__(message)
        self.lower_bound = lower_bound


class ResourceLimitError(WalklabError):
    """A memory or support-size guard fired. ``suggestion`` says what to relax."""

    def __init__(self, message: str, suggestion: str = ""):
        super().__init__(message + (f" ({suggestion})" if suggestion else ""))
        self.suggestion = suggestion


class NumericError(WalklabError):
    """Quadrature or eigensolver failure."""


class UnsupportedError(WalklabError):
    """Requested functionality is deliberately out of scope."""


class FitRefusalError(WalklabError):
    """Decay-fit preconditions not met; carries a diagnostic."""
