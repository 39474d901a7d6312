"""Exception types shared across the package."""


class PowerCtlError(Exception):
    """Base class for all package errors."""


class AssumptionViolation(PowerCtlError, ValueError):
    """A model assumption (feasibility condition) does not hold."""


class NotADistribution(PowerCtlError, ValueError):
    """A probability vector or stochastic-matrix row fails to normalize."""


class OutOfRange(PowerCtlError, IndexError):
    """A state coordinate or flat label lies outside the state space."""


class WrongDimensions(PowerCtlError, ValueError):
    """Operation requires the two-level, unit-buffer state space."""


class StepTooLarge(PowerCtlError, RuntimeError):
    """Integrator step violated the simplex tolerance."""


class NonConvergent(PowerCtlError, RuntimeError):
    """A run hit its time cap before meeting the convergence criterion.

    Carries the value accumulated up to the cap in ``value``.
    """

    def __init__(self, message, value=None, t_end=None):
        super().__init__(message)
        self.value = value
        self.t_end = t_end


class DegenerateRegime(PowerCtlError, ValueError):
    """The two regime constants are not properly ordered."""


class ConvexityUnverified(PowerCtlError, RuntimeError):
    """Noise power exceeds the convexity certificate; refusing to classify."""


class DomainError(PowerCtlError, ValueError):
    """Argument outside the domain of a closed-form expression."""


class Infeasible(PowerCtlError, ValueError):
    """Transmit count excluded from the action set (SINR or power cap)."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class NoConvergence(PowerCtlError, RuntimeError):
    """Value iteration failed to meet the span tolerance."""

    def __init__(self, message, span=None, iterations=None):
        super().__init__(message)
        self.span = span
        self.iterations = iterations


class MultichainDetected(PowerCtlError, RuntimeError):
    """Policy-induced chain has more than one recurrent class."""
