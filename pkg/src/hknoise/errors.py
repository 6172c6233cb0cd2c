"""Exception types shared across the package."""


class HKError(Exception):
    """Base class for errors raised by hknoise."""


class DomainError(HKError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class BudgetError(HKError, ValueError):
    """A control/uncertainty pair leaves the admissible noise support."""


class PreconditionError(HKError, ValueError):
    """A control law was invoked outside the parameter regime it is valid for."""


class ConfigError(HKError, ValueError):
    """An experiment or reach-task configuration failed validation."""
