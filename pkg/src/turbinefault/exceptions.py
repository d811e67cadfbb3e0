"""Exception hierarchy.

Every error raised by the package derives from :class:`TurbineFaultError`.
The four families map onto the CLI exit codes (config 2, data 3, train 4,
io 5).
"""

from sklearn.exceptions import ConvergenceWarning  # re-exported

__all__ = [
    "TurbineFaultError",
    "ConfigError",
    "DataError",
    "TrainError",
    "ArtifactIOError",
    "MissingColumn",
    "ParseError",
    "EmptyFile",
    "DegenerateColumn",
    "InsufficientData",
    "BadFractions",
    "EmptyInput",
    "LengthMismatch",
    "DuplicateName",
    "TooFewSamples",
    "BadOverride",
    "ShapeMismatch",
    "EmptyBatch",
    "EmptySplit",
    "WindowTooLong",
    "DivergenceDetected",
    "ConvergenceWarning",
]


class TurbineFaultError(Exception):
    exit_code = 1


class ConfigError(TurbineFaultError, ValueError):
    exit_code = 2


class DataError(TurbineFaultError, ValueError):
    exit_code = 3


class TrainError(TurbineFaultError, RuntimeError):
    exit_code = 4


class ArtifactIOError(TurbineFaultError, OSError):
    exit_code = 5


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class EmptyFile(DataError):
    pass


class DegenerateColumn(DataError):
    pass


class InsufficientData(DataError):
    pass


class BadFractions(DataError):
    pass


class EmptyInput(DataError):
    pass


class LengthMismatch(DataError):
    pass


class DuplicateName(DataError):
    pass


class TooFewSamples(DataError):
    pass


class WindowTooLong(DataError):
    pass


class EmptySplit(DataError):
    pass


class BadOverride(ConfigError):
    pass


class ShapeMismatch(TrainError, ValueError):
    pass


class EmptyBatch(TrainError, ValueError):
    pass


class DivergenceDetected(TrainError):
    """Training produced a non-finite loss; ``trace`` holds the epochs so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
