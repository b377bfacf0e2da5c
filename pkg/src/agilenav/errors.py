"""Exception types shared across the package, mapped to CLI exit codes."""


class AgilenavError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AgilenavError):
    """Invalid configuration, flag combination, or checkpoint version (exit 1)."""


class NumericalError(AgilenavError):
    """Non-finite value or diverged computation (exit 2)."""


class GenerationError(AgilenavError):
    """Problem generation could not satisfy placement constraints (exit 2)."""
