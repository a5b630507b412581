"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes: usage/config problems exit 1,
data problems exit 2, numerical failures exit 3.
"""


class BnError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(BnError, ValueError):
    """Invalid configuration value (negative penalty, bad threshold, ...)."""

    exit_code = 1


class DataError(BnError, ValueError):
    """Input tables are malformed, incomplete or fail validation."""

    exit_code = 2


class NumericalError(BnError, ArithmeticError):
    """A matrix is singular or otherwise unusable."""

    exit_code = 3


class InsufficientSupportError(NumericalError):
    """Sampling produced no accepted samples / zero total weight."""


class GraphError(BnError, ValueError):
    exit_code = 2


class CycleError(GraphError):
    def __init__(self, path):
        self.path = list(path)
        super().__init__("arc would create a cycle along " + " -> ".join(self.path))


class TierViolationError(GraphError):
    pass
