"""First-detection statistics of two-level quantum systems under random
projective measurements.

Exceptions shared by every submodule live here so the numerical modules can
raise each other's errors without import cycles.
"""


class FirstDetectionError(RuntimeError):
    """Base class for every error raised by the firstdetect package"""


class InvalidParameter(FirstDetectionError, ValueError):
    """A physical or numerical parameter is outside its domain"""


class NonHermitian(InvalidParameter):
    """Matrix is not Hermitian within tolerance"""


class NonNormalized(InvalidParameter):
    """State vector does not have unit norm"""


class NegativeTime(InvalidParameter):
    """A time argument was negative where only non-negative times make sense"""


class InvalidMu(InvalidParameter):
    """The rescaled coupling 2g²n/r² must be strictly positive"""


class NumericalFailure(FirstDetectionError):
    """A computation could not reach the requested accuracy or has no finite answer"""


class QuadratureFailure(NumericalFailure):
    """Adaptive quadrature did not meet its tolerance"""

    def __init__(self, message: str, error_estimate: float | None = None):
        super().__init__(message)
        self.error_estimate = error_estimate


class DivergentTransform(NumericalFailure):
    """Laplace transform evaluated outside its region of convergence"""


class PoleHit(NumericalFailure):
    """Evaluation landed on a pole of a transform"""


class InversionUnstable(NumericalFailure):
    """Numerical Laplace inversion failed its node-doubling self-check"""

    def __init__(self, message: str, times: list[float] | None = None):
        super().__init__(message)
        self.times = times or []


class ConfluentPoles(NumericalFailure):
    """Two poles nearly coincide and no multiplicity was supplied"""


class InfiniteMean(NumericalFailure):
    """Mean detection time diverges"""


class NotHeavyTailed(NumericalFailure):
    """A power-law tail was requested from a light-tailed distribution"""


class IntegerExponent(NumericalFailure):
    """Integer tail exponents carry logarithmic corrections that are not modelled"""


class NoFiniteOptimum(NumericalFailure):
    """The objective decreases monotonically so no finite minimizer exists"""


class BracketFailure(NumericalFailure):
    """Unimodality could not be established on the search interval"""


class BracketInvalid(NumericalFailure):
    """Bracket points do not satisfy a < b < c with f(b) < min(f(a), f(c))"""


class MonotoneFunction(NumericalFailure):
    """Bracket expansion ran out of steps while the function kept decreasing"""


class CutoffTooSmall(UserWarning):
    """More than the tolerated fraction of trajectories hit the censoring horizon"""
