"""Exception hierarchy shared across the package."""


class StddError(Exception):
    """Base class for package errors."""


class StructuralError(StddError):
    """An input's shape, length, or bounds violate a documented contract."""


class IllegalOperationError(StddError):
    """A state transition the sequence lifecycle forbids."""


class ConfigError(StddError):
    """Invalid configuration value."""


class ReplayUnderrunError(StddError):
    """A replay source ran out of recorded steps before the run finished."""


class ContractViolationError(StddError):
    """A strategy produced a step decision that violates its contract."""
