"""Exception hierarchy; the CLI maps each class to an exit code."""


class IpmError(Exception):
    exit_code = 3


class DataError(IpmError, ValueError):
    """Malformed or unusable input data."""

    exit_code = 2

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EstimationError(IpmError, ArithmeticError):
    """A numeric procedure could not produce a usable answer."""

    exit_code = 3


class ConfigError(IpmError, ValueError):
    """Invalid or incomplete configuration."""

    exit_code = 1
