"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array/tensor shapes violate an operation's contract."""


class ParameterError(ValueError):
    """A scalar argument is out of its valid range."""


class ConfigurationError(ValueError):
    """A run configuration is internally inconsistent."""


class CheckpointError(RuntimeError):
    """A checkpoint cannot be loaded or does not match the requested setup."""


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss and was aborted."""
