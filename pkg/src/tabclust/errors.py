"""Exception types shared across the package."""


class TabclustError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(TabclustError, ValueError):
    """Array shapes disagree with what an operation requires."""


class InvalidClusterCountError(TabclustError, ValueError):
    """Requested cluster count is outside the valid range for the data."""


class DegenerateDataError(TabclustError, ValueError):
    """Input data cannot be processed (non-finite entries, zero-variance
    columns where variance is required, and similar)."""


class DegenerateGeometryError(TabclustError, ValueError):
    """A convolution plan or blob layout cannot be realized for the
    requested sizes."""


class TrainingDivergedError(TabclustError, RuntimeError):
    """Training produced non-finite losses and could not recover."""


class CsvParseError(TabclustError, ValueError):
    """A CSV file could not be parsed; carries row/column location."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ManifestMismatchError(TabclustError, ValueError):
    """Loaded dataset shape disagrees with the manifest declaration."""


class ConfigError(TabclustError, ValueError):
    """A benchmark configuration failed validation."""


class IncompleteResultsError(TabclustError, ValueError):
    """Result aggregation was asked to run over an incomplete matrix."""
