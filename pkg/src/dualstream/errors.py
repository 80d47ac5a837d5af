"""Exception types shared across the package.

The CLI maps these onto process exit codes (see ``dualstream.cli``).
"""


class DualStreamError(Exception):
    """Base class for all package errors."""


class ConfigError(DualStreamError, ValueError):
    """Invalid configuration or usage (exit code 1)."""


class DataError(DualStreamError, ValueError):
    """Missing, unreadable or malformed input data (exit code 2)."""


class NumericError(DualStreamError, FloatingPointError):
    """Non-finite values or a failed numerical check (exit code 3)."""
