"""Exception hierarchy shared by every circsense module."""


class CircsenseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CircsenseError, ValueError):
    """Invalid user-supplied parameters (distribution, sizes, flags)."""


class ContractError(CircsenseError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class DomainError(CircsenseError, ValueError):
    """A numeric argument lies outside the domain of a formula."""


class ResourceError(CircsenseError, MemoryError):
    """A request would exceed a configured size cap."""


class RangeError(CircsenseError, ValueError):
    """A search range does not bracket the requested target."""

    def __init__(self, message, endpoint_rates=None):
        super().__init__(message)
        self.endpoint_rates = endpoint_rates
