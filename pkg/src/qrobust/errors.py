"""Exception hierarchy.

Every error carries a ``category`` string; the CLI reports it in a
machine-readable line and maps it to a distinct exit code.
"""


class QRobustError(Exception):
    category = "error"
    exit_code = 1


class ConfigurationError(QRobustError, ValueError):
    category = "configuration"
    exit_code = 3


class DataError(QRobustError, ValueError):
    category = "data"
    exit_code = 4


class FormatError(QRobustError, ValueError):
    category = "format"
    exit_code = 5


class CapabilityError(QRobustError, NotImplementedError):
    category = "capability"
    exit_code = 6


class CapacityError(QRobustError, ValueError):
    category = "capacity"
    exit_code = 7


class DegenerateInputError(QRobustError, ValueError):
    category = "degenerate_input"
    exit_code = 8


class TrainingError(QRobustError, RuntimeError):
    category = "training"
    exit_code = 9

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
