"""Particle simulation and diagnostics for Stein variational gradient descent."""

__version__ = "0.1.0"

from .errors import BlowUpError, ConfigError, NumericalError  # noqa: E402

__all__ = ["__version__", "BlowUpError", "ConfigError", "NumericalError"]
