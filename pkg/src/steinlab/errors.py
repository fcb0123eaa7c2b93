"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values or failed to converge."""


class BlowUpError(NumericalError):
    """Particle trajectory left the admissible region.

    ``partial`` holds the trajectory recorded up to the failure.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
