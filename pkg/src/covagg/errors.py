"""Exception hierarchy shared across the package.

Each class carries the process exit code the CLI maps it to.
"""


class CovaggError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class FormatError(CovaggError):
    """A file does not conform to its declared on-disk format."""

    exit_code = 2


class ContractError(CovaggError):
    """An argument or input violates a documented precondition."""

    exit_code = 3


class DegenerateDataError(CovaggError):
    """Input data is numerically degenerate for the requested operation."""

    exit_code = 4
