"""Package-level error types."""


class ConfigError(ValueError):
    """A run configuration is malformed or references missing files."""


class DivergenceError(RuntimeError):
    """Optimization produced non-finite values and could not recover."""
