"""Shared exception types."""


class ConfigError(ValueError):
    """Raised when a configuration value is out of its valid range."""


class SingularMatrixError(ValueError):
    """Raised when a linear solve hits a singular normal matrix."""


class NotFittedError(RuntimeError):
    """Raised when transform/predict is called before fit."""


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""
