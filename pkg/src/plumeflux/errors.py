"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: config errors exit 2, data and
domain errors exit 3, numerical errors exit 4.
"""


class PlumefluxError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(PlumefluxError):
    """Invalid or incomplete run configuration."""

    exit_code = 2


class DataError(PlumefluxError):
    """Malformed or inconsistent input data (files, rasters, tables)."""

    exit_code = 3


class DomainError(PlumefluxError):
    """Operation called outside its domain (empty mask, zero pixels, ...)."""

    exit_code = 3


class NumericalError(PlumefluxError):
    """Internal numerical failure that indicates a bug, not bad input."""

    exit_code = 4
