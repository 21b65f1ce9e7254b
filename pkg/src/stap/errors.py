"""Exception types shared across the package."""


class StapError(Exception):
    """Base class for all package-specific errors."""


class UndefinedDirectionError(StapError):
    """A bearing was requested for a zero-length vector."""


class DataError(StapError):
    """Malformed or inconsistent input data."""


class ConfigError(StapError):
    """Invalid or unknown configuration."""


class NumericError(StapError):
    """A numeric failure inside the sampler (non-finite density, bad covariance)."""
