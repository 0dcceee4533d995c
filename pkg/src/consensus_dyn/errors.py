"""Exception types shared across the package."""

from __future__ import annotations


class NotPSDError(ValueError):
    """Matrix fails the near-PSD acceptance test."""

    def __init__(self, message: str, min_eigenvalue: float | None = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class NonFiniteCostError(ValueError):
    """Objective returned a non-finite value; carries the particle index."""

    def __init__(self, message: str, particle: int | None = None):
        super().__init__(message)
        self.particle = particle


class BlowUpError(RuntimeError):
    """A particle norm crossed the divergence guard during integration."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class UnverifiedCertificateError(ValueError):
    """A bound check was requested for a certificate that is not verified."""


class UnsupportedObjectiveError(ValueError):
    """The requested reference quantity is unavailable for this objective."""


class ConfigError(ValueError):
    """Invalid or unknown entry in a run configuration."""
