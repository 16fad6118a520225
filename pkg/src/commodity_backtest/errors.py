"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
ComputationError -> 3.
"""


class BacktestError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(BacktestError):
    """Invalid run configuration or command-line usage."""


class DataError(BacktestError):
    """Malformed or inconsistent input data."""


class ComputationError(BacktestError):
    """A numerical step could not be carried out."""


class InsufficientDataError(ComputationError):
    """Too few observations for the requested statistic."""
