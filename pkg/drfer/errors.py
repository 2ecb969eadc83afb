"""Exception hierarchy for drfer.

Every failure raised on purpose by the package derives from ``DrferError`` so the
CLI can map domain errors to exit code 1. Argument and configuration errors also
derive from ``ValueError`` so callers that only know the builtin still catch them.
"""


class DrferError(Exception):
    """Base class for all drfer domain errors."""


class InvalidArgumentError(DrferError, ValueError):
    """An operation was called with arguments outside its contract."""


class DegenerateGeometryError(DrferError, ValueError):
    """Input geometry is rank deficient for the requested operation."""


class IncompleteDataError(DrferError):
    """A required expression class, subject neutral or mean-face entry is missing."""


class DatasetLoadError(DrferError):
    """A dataset manifest or cloud file could not be loaded."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{message} [{path}]" if path else message)


class ConfigurationError(DrferError, ValueError):
    """Configuration values are inconsistent with each other or with a model."""


class CheckpointError(DrferError):
    """A checkpoint is unreadable or does not match the requested model."""


class StageOrderError(CheckpointError):
    """A checkpoint's stage tag is not the predecessor the runner requires."""


class FoldLeakageError(DrferError):
    """A test subject was observed during training."""


class TrainingDivergedError(DrferError):
    """A loss became NaN or infinite."""


class ReportWriteError(DrferError):
    """Report artifacts could not be written to the output directory."""
