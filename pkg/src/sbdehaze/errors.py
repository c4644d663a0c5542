"""Exception types shared across the package."""


class SBError(Exception):
    """Base class for errors raised by sbdehaze."""


class DimensionError(SBError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(SBError, ValueError):
    """A value lies outside the domain of the operation (or is non-finite)."""


class ContractError(SBError, ValueError):
    """A documented precondition of a call was violated."""


class ConvergenceError(SBError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class ConfigError(SBError, ValueError):
    """Invalid or unknown configuration."""
