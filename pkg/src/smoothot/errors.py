"""Exception types shared across the package."""


class SmoothOTError(Exception):
    """Base class for all package errors."""


class InputError(SmoothOTError):
    """Invalid user input: bad parameters, malformed files, dimension mismatch."""


class SolverError(SmoothOTError):
    """The exact transport solver failed to certify its solution."""


class NullProximityError(SmoothOTError):
    """The estimated smoothed distance is too close to zero for delta-method
    inference; the distance interval is refused rather than reported."""

    def __init__(self, message, cost_estimate=None, spread=None):
        super().__init__(message)
        self.cost_estimate = cost_estimate
        self.spread = spread


class OracleUnavailableError(SmoothOTError):
    """No ground-truth value is available for the requested experiment design."""


class DegenerateVarianceError(SmoothOTError):
    """Every replication produced a zero variance estimate."""
