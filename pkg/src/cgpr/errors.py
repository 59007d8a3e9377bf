"""Exception hierarchy.

Each class carries the process exit code the command-line tool uses when the
error escapes a subcommand.
"""


class CGPRError(Exception):
    exit_code = 1


class ConfigError(CGPRError, ValueError):
    """Invalid configuration or arguments."""

    exit_code = 2


class DataError(CGPRError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class DimensionError(DataError):
    """Array shapes do not line up."""


class NumericalError(CGPRError, ArithmeticError):
    """A factorization or solve failed.

    ``diagnostics`` holds whatever the raising code knew at the time
    (condition estimates, jitter tried, ...).
    """

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
