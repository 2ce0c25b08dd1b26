"""Exception types raised across the package."""


class WGFError(Exception):
    """Base class for all package errors."""


class NonDifferentiable(WGFError, ValueError):
    """A derivative was requested at a value jump of a piecewise form."""

    def __init__(self, location, message=None):
        self.location = float(location)
        super().__init__(message or f"not differentiable at x={self.location!r} (value jump)")


class NonIntegrableTail(WGFError, ValueError):
    """exp(-V) is not integrable because a tail piece does not grow."""


class QuadratureFailure(WGFError, ArithmeticError):
    """Adaptive quadrature could not reach the requested tolerance."""


class RegularityHalt(WGFError):
    """The current density left the domain of the subdifferential; stepping stops."""

    def __init__(self, reason, location):
        self.reason = reason
        self.location = location
        super().__init__(f"flow halted: {reason} at {location!r}")


class InvalidStep(WGFError, ValueError):
    """A step size violates the injectivity bound h < 1/(M + M0)."""

    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message)


class FitUnstable(WGFError, ArithmeticError):
    """A power-law fit has log-space residual above the accepted level."""
