"""Exception hierarchy shared across the pipeline."""


class GemError(Exception):
    """Base class for all pipeline errors."""


class DataError(GemError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class ConfigError(GemError):
    """Invalid configuration or arguments (CLI exit code 1)."""
