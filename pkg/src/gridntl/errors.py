"""Exception hierarchy shared by all pipeline stages.

The CLI maps these onto exit codes: ConfigError -> 1, DataError (and
subclasses) -> 2, InternalCheckError -> 3.
"""


class GridNtlError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GridNtlError):
    """Invalid configuration value or combination (usage error)."""


class DataError(GridNtlError):
    """Problem with input data or a data-dependent contract."""


class ParseError(DataError):
    """Malformed input row; carries file name and 1-based line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class IntegrityError(DataError):
    """Referential or ordering invariant violated (e.g. dangling customer_id)."""


class SamplingError(DataError):
    """Not enough records of a label class to build the requested sample."""


class EncodingError(DataError):
    """Unknown categorical token during one-hot encoding."""


class AlignmentError(DataError):
    """Feature blocks keyed by different customer sets."""


class CellAssignmentError(DataError):
    """Customer coordinates fall outside the grid bounding box."""


class DegenerateInputError(DataError):
    """An operation received input it cannot meaningfully process."""


class SplitError(DataError):
    """Too few rows of a class to form a stratified split."""


class MetricUndefinedError(DataError):
    """Recall or specificity undefined because a class is absent."""


class DivergenceError(DataError):
    """Training produced a non-finite loss; carries the epoch index."""

    def __init__(self, epoch, message=None):
        super().__init__(message or f"non-finite training loss at epoch {epoch}")
        self.epoch = epoch


class ShapeError(DataError):
    """Prediction input width does not match the trained model."""


class InternalCheckError(GridNtlError):
    """An internal output invariant failed; indicates a bug, not bad data."""
