"""
Custom exceptions for the SimDiff forecaster.

Every error escaping to the command line carries the process exit code it maps to.
"""


class SimDiffError(Exception):
    """Base exception for forecaster errors."""
    exit_code = 1


class ConfigurationError(SimDiffError):
    """Raised when a run configuration is missing, malformed or inconsistent."""
    exit_code = 2


class DataError(SimDiffError):
    """Raised when a dataset cannot be read or is too short for the requested windows."""
    exit_code = 2


class NumericalError(SimDiffError):
    """Raised when a NaN/Inf appears in a tensor, gradient or loss."""
    exit_code = 3


class ShapeError(SimDiffError, ValueError):
    """Raised when operands of a tensor op have incompatible shapes."""
    exit_code = 2


class ArtifactMismatchError(SimDiffError):
    """Raised when a checkpoint does not match the configuration it is used with."""
    exit_code = 4


class CheckpointError(ArtifactMismatchError):
    """Raised when a checkpoint file is missing or unreadable."""
    pass
