"""Exception hierarchy shared across the package."""


class ForestGPError(Exception):
    """Base class for all package errors."""


class InputError(ForestGPError, ValueError):
    """Invalid arguments or data shapes."""


class DatasetError(InputError):
    """A dataset file failed schema or value validation.

    ``row`` is the 1-based data row (header excluded) and ``column`` the
    column name, when the problem can be pinned to a cell.
    """

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


class TrainingError(ForestGPError, RuntimeError):
    """Model fitting failed (e.g. factorization did not succeed)."""


class PredictionError(ForestGPError, RuntimeError):
    """Prediction failed for a specific plot."""

    def __init__(self, message, plot_id=None):
        self.plot_id = plot_id
        if plot_id is not None:
            message = f"plot {plot_id!r}: {message}"
        super().__init__(message)


class NumericalError(ForestGPError, ArithmeticError):
    """An iterative numerical routine failed to converge."""
