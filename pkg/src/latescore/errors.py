"""Exception types shared across the package.

The CLI maps these onto stable exit codes: configuration and parsing
problems exit with status 2, degenerate-data conditions with status 3.
"""


class LatescoreError(Exception):
    """Base class for all package-specific errors."""


class InvalidConfigError(LatescoreError):
    """A parameter or flag combination violates a precondition."""


class CsvParseError(LatescoreError):
    """A data file could not be parsed; the message names row and column."""


class DegenerateDataError(LatescoreError):
    """A statistic is undefined because a second moment is exactly zero."""


class DegenerateFoldError(LatescoreError):
    """A cross-fitting training set contains only one instrument level."""


class PositivityError(LatescoreError):
    """An instrument propensity lies outside (0, 1)."""


class WeakDenominatorError(DegenerateDataError):
    """The ratio estimator's denominator is numerically zero.

    The score confidence set remains well defined in this situation and
    should be used instead of the Wald interval.
    """


class DecompositionError(LatescoreError):
    """A covariance matrix is not symmetric positive semidefinite."""
