"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`WeakArmaError`
so callers (and the CLI) can catch one type.
"""


class WeakArmaError(Exception):
    """Base class for all package errors."""


class DimensionError(WeakArmaError, ValueError):
    """Array or parameter vector has the wrong shape."""


class DomainError(WeakArmaError, ValueError):
    """Parameter outside its admissible domain."""


class StabilityError(WeakArmaError, ValueError):
    """AR polynomial not stable or MA polynomial not invertible."""


class NumericOverflowError(WeakArmaError, ArithmeticError):
    """Recursion produced non-finite values.

    Attributes
    ----------
    t : int
        First (1-based) time index with a non-finite value.
    """

    def __init__(self, message: str, t: int):
        super().__init__(message)
        self.t = t


class InitializationError(WeakArmaError):
    """No admissible starting point for the optimizer."""


class SingularCovarianceError(WeakArmaError, ArithmeticError):
    """Residual covariance matrix is singular."""


class DegenerateResidualError(WeakArmaError, ArithmeticError):
    """A residual coordinate has zero sample variance."""


class IllConditionedError(WeakArmaError, ArithmeticError):
    """Information matrix too ill-conditioned to invert."""


class SingularNormalizerError(WeakArmaError, ArithmeticError):
    """Self-normalization matrix is (numerically) singular.

    The normalizer is almost surely invertible when the noise has a positive
    density in a neighbourhood of zero. Noises with an atom at zero (for
    instance a mixture with a point mass at 0) can make it exactly singular
    with positive probability.
    """


class TableLookupError(WeakArmaError, KeyError):
    """Requested dimension K is not present in the quantile table."""


class TableFormatError(WeakArmaError, ValueError):
    """Quantile table file is malformed."""


class ParseError(WeakArmaError, ValueError):
    """Input file could not be parsed."""
