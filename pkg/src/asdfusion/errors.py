class AsdError(Exception):
    """Base class for toolkit errors."""


class ConfigError(AsdError, ValueError):
    """Bad configuration or command-line arguments."""


class DataError(AsdError, ValueError):
    """Input data is missing, malformed or inconsistent."""


class NumericError(AsdError, FloatingPointError):
    """A computation produced NaN or Inf."""
