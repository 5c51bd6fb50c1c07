"""Exception types shared across the package."""


class CovselError(Exception):
    """Base class for all covsel errors."""


class NotPositiveDefiniteError(CovselError):
    """A matrix required to be positive definite failed factorization."""


class AsymmetricMatrixError(CovselError):
    """A matrix exceeded the relative symmetry tolerance."""


class DimensionMismatchError(CovselError):
    """Operands have incompatible dimensions."""


class NonRegularPriorError(CovselError):
    """Prior sample size is non-positive where a posterior mode is required."""


class SupportError(CovselError):
    """A parameter value lies outside the support of the relevant density."""


class DegenerateScatterError(CovselError):
    """Scatter matrix is singular where a positive definite rate is required."""


class EmptyDatasetError(CovselError):
    """Operation requires at least one observation."""


class CsvParseError(CovselError):
    """CSV ingestion failed; carries 1-based row/column location."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(CovselError):
    """Invalid configuration of a study or CLI invocation."""
