"""Shared error types."""


class NonFiniteResidualError(RuntimeError):
    """A residual or matrix-vector product produced non-finite values."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""
