"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems are usage
errors (exit 1), malformed or unreadable data is a data error (exit 2),
and anything signalling a broken internal invariant exits 3.
"""


class AnomkitError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AnomkitError, ValueError):
    """Invalid parameter or configuration value."""


class DataError(AnomkitError, ValueError):
    """Malformed input data (records, files, shapes out of contract)."""


class ShapeError(DataError):
    """Array dimensions do not match the documented contract."""


class InternalError(AnomkitError, RuntimeError):
    """An internal invariant was violated; indicates a bug."""
