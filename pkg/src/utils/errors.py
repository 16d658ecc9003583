"""Exception hierarchy shared by every qroute module."""

from typing import Any


class QRouteError(Exception):
    """Base class for all errors raised by qroute."""

    pass


class InputError(QRouteError):
    """Exception raised for invalid user-supplied input."""

    pass


class ParseError(InputError):
    """Exception raised when a text file cannot be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class CapacityError(InputError):
    """Exception raised when a circuit has more qubits than the architecture has nodes."""

    pass


class ModelFormatError(InputError):
    """Exception raised for unreadable or incompatible model files."""

    pass


class ConfigError(QRouteError):
    """Exception raised for invalid configuration values or keys."""

    pass


class ContractError(QRouteError):
    """Exception raised when a library precondition is violated."""

    pass


class RoutingFailure(QRouteError):
    """Exception raised when routing gives up (step cap reached)."""

    def __init__(self, message: str, partial: Any = None):
        # partial is the RoutedCircuit emitted before the abort
        self.partial = partial
        super().__init__(message)


class NoSolutionError(RoutingFailure):
    """Exception raised when exhaustive search finds nothing within its depth bound."""

    pass


class ValidationError(QRouteError):
    """Exception raised when a routed circuit fails validation."""

    def __init__(self, message: str, violations: list | None = None):
        self.violations = violations or []
        super().__init__(message)
