"""Exception types raised by the stepping and projection layers."""


class RKProjError(Exception):
    """Base class for all numerical failures in this package."""


class StepFailure(RKProjError):
    """A right-hand side evaluation failed or returned non-finite values."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class DegenerateDirectionError(RKProjError):
    """A search direction has zero length (or the named invariant has no usable component)."""

    def __init__(self, message, invariant=None):
        super().__init__(message)
        self.invariant = invariant


class UnsolvableProjectionError(RKProjError):
    """The projection equation has no admissible root at this step size."""

    def __init__(self, message, discriminant=None, residuals=None, matrix=None):
        super().__init__(message)
        self.discriminant = discriminant
        self.residuals = list(residuals) if residuals is not None else []
        self.matrix = matrix


class IntegrationError(RKProjError):
    """Wraps a step or projection failure with the step index and time where it happened."""

    def __init__(self, message, step, time, cause=None):
        super().__init__(f"step {step} at t={time!r}: {message}")
        self.step = step
        self.time = time
        self.cause = cause
