"""Exception and warning types shared across the package."""


class QEError(Exception):
    """Base class for all errors raised by hybridqe."""


class DataError(QEError, ValueError):
    """Malformed or inconsistent input data (files, records, dimensions)."""


class ContradictoryEvidence(QEError):
    """A truncation update found (numerically) zero mass on the allowed side."""

    def __init__(self, message, judgment=None):
        super().__init__(message)
        self.judgment = judgment


class ThresholdOrderError(QEError):
    """Posterior threshold means of a judge stopped being strictly increasing."""


class UndefinedCorrelation(QEError, ValueError):
    """Rank correlation requested on too few or constant values."""


class DataWarning(UserWarning):
    """Recoverable data-quality issue (duplicates, excluded records, ...)."""
