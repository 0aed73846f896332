"""Exception types raised by the numerical routines."""


class ConvergenceError(RuntimeError):
    """A quadrature, extrapolation or limit did not reach its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class NonFiniteError(FloatingPointError):
    """An objective returned NaN or an infinity where a finite value is required."""


class CutoffError(ValueError):
    """A truncation (photon-number cutoff, pixel extent) is too small for the requested accuracy."""


class ReconstructionError(ArithmeticError):
    """A covariance rebuilt from its symplectic data does not match the expected matrix."""
