"""Shared exception types.

ConfigError maps to CLI exit code 2 (validation), NumericalError to 3.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad value, unknown key, malformed file."""


class NumericalError(RuntimeError):
    """Non-finite values encountered where finite math was required."""
