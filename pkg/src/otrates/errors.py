"""Exception taxonomy shared across the package.

Exit-code mapping used by the CLI: UsageError -> 1, NumericalError -> 2.
"""


class OTRatesError(Exception):
    """Base class for all package errors."""


class UsageError(OTRatesError):
    """Caller violated a precondition (bad arguments, malformed config)."""


class NumericalError(OTRatesError):
    """A computation failed numerically (non-finite data, solver breakdown)."""
