"""Exception hierarchy.

Everything raised on bad data or model breakdown derives from EvnoiseError so
the CLI can map it to a single exit code.
"""


class EvnoiseError(Exception):
    """Base class for all package errors."""


class DomainError(EvnoiseError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class SaddleDegenerateError(EvnoiseError, ArithmeticError):
    """Saddle point is too close to zero for the leading-order formula.

    Happens when the detection variable has mean ~= 0 (threshold at the
    distribution center). Callers may fall back to the Gaussian form.
    """

    def __init__(self, saddle: float):
        self.saddle = saddle
        super().__init__(f"degenerate saddle point s={saddle:.3e} (|s| < 1e-6)")


class NoSaddleError(EvnoiseError, ArithmeticError):
    """No sign change of the CGF derivative was found within |t| <= 50."""


class CGFRangeError(EvnoiseError, OverflowError):
    """CGF evaluation would overflow at the requested t."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"exp overflow in cumulant generating function at t={t!r}")


class DegenerateRecordingError(EvnoiseError, ValueError):
    """Dead-time correction consumed the whole exposure (denominator <= 0)."""


class InsufficientDataError(EvnoiseError, ValueError):
    """Not enough bins/pixels/samples for the requested statistic."""


class DevianceNotApplicableError(EvnoiseError, ValueError):
    """Deviance residuals are undefined when the array-mean count is zero."""


class NoSolutionError(EvnoiseError, ValueError):
    """A root/inversion target is unreachable within its search bounds."""


class SingularFitError(EvnoiseError, ValueError):
    """Least-squares design matrix is rank deficient."""


class NonConvergenceError(EvnoiseError, RuntimeError):
    """All optimizer starts failed; carries the best point seen so far."""

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)


class FormatError(EvnoiseError, ValueError):
    """A data file is malformed; message carries file and line number."""
