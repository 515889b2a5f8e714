"""Exception hierarchy for cmalab."""


class CMALabError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(CMALabError, ValueError):
    """A scalar parameter is outside its documented range."""


class InvalidDomainError(CMALabError, ValueError):
    """A domain (ball, planar grid) is malformed."""


class InconsistentMaskError(InvalidDomainError):
    """A planar node touches the exterior without a boundary offset."""


class AdmissibilityError(CMALabError, ValueError):
    """A potential violates the discrete plurisubharmonic cone constraints."""


class InvalidRHSError(CMALabError, ValueError):
    """A Monge-Ampere or Poisson right-hand side is negative."""


class DegenerateInputError(CMALabError, ValueError):
    """The input is identically zero (or otherwise degenerate) where a ratio is needed."""


class ShapeMismatchError(CMALabError, ValueError):
    """Two fields live on different discretizations."""


class QuadratureMismatchError(CMALabError, ArithmeticError):
    """Two independent quadratures of the same quantity disagree."""


class CapabilityError(CMALabError, NotImplementedError):
    """The requested combination of inputs is not supported."""


class SolverFailureError(CMALabError, RuntimeError):
    """An iterative solver did not converge.

    Attributes
    ----------
    stats : dict
        Iteration count and final relative residual.
    """

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = dict(stats or {})


class StagnationError(CMALabError, RuntimeError):
    """A flow step could not be accepted even after the maximal number of step halvings.

    The last accepted state is kept in ``state``.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class UsageError(CMALabError):
    """Bad command-line or configuration input."""
