"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, FormatError and
OSError -> 3, NumericError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration value or combination of flags."""


class FormatError(ValueError):
    """Malformed file content: bad magic, truncated payload, schema violation."""


class NumericError(RuntimeError):
    """A numerical routine failed to produce a usable result."""
