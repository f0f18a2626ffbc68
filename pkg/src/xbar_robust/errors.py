"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or combination.

    ``errors`` holds the full list of validation messages when the
    failure came from a multi-field validation pass.
    """

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors) if errors is not None else [message]


class MappingError(ValueError):
    """A tensor does not fit the crossbar or tile plan it targets."""


class NumericalError(RuntimeError):
    """Solver failure (singular system, non-convergence); carries the residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TrainingError(RuntimeError):
    """Divergent or aborted training run."""


class UnsupportedBackendError(RuntimeError):
    """Operation requested on a backend that cannot provide it."""


class IngestionError(ValueError):
    """Malformed dataset file; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset
