"""Exception hierarchy shared across the package.

CLI exit codes map onto these: ConfigError -> 2, DataError and its
subclasses -> 3, NumericError -> 4.
"""


class WindloadError(Exception):
    """Base class for all package errors."""


class ConfigError(WindloadError):
    """Invalid configuration: bad fractions, empty split, mismatched config."""


class DataError(WindloadError):
    """Invalid or inconsistent input data."""


class GeometryError(DataError):
    """Bad geometry: non-watertight mesh, mesh outside grid, degenerate field."""


class ShapeMismatchError(DataError):
    """Array or grid shapes do not line up."""


class FormatError(DataError):
    """Corrupt or unrecognized file content."""


class NumericError(WindloadError):
    """Non-finite values where finite ones are required (e.g. diverged training)."""
