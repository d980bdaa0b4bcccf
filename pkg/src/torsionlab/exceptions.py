class TorsionLabError(Exception):
    """Base class for errors raised by this package."""


class DomainRangeError(TorsionLabError, ValueError):
    """A point lies outside the domain of the function being evaluated."""


class GeometryError(TorsionLabError, ValueError):
    """A domain or geometric request is malformed."""


class HypothesisError(TorsionLabError, ValueError):
    """A precondition of an estimate (e.g. ``h(x) >= 1/2``) does not hold."""


class SingularityError(TorsionLabError, ValueError):
    """Kernel evaluated too close to its diagonal singularity."""


class QuadratureError(TorsionLabError, RuntimeError):
    """Successive quadrature refinements disagree."""


class ResolutionError(TorsionLabError, ValueError):
    """Grid too coarse to resolve the domain."""


class NumericalError(TorsionLabError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class LevelError(TorsionLabError, ValueError):
    """Requested superlevel set is empty."""


class PrerequisiteError(TorsionLabError, RuntimeError):
    """An experiment could not obtain one of its inputs.

    ``report`` may carry the partial experiment report built before the
    missing input was detected.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
