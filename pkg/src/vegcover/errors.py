"""Exception types shared across the package."""


class VegcoverError(Exception):
    """Base class for package errors."""


class ConfigError(VegcoverError, ValueError):
    """Invalid configuration, inputs, or dimension mismatch (CLI exit code 2)."""


class NumericalError(VegcoverError, ArithmeticError):
    """Non-finite values or failed factorizations (CLI exit code 3)."""
