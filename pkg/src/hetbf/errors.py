"""Exception hierarchy shared by all modules."""


class HetBFError(Exception):
    """Base class for errors raised by hetbf."""


class DataError(HetBFError, ValueError):
    """Input data is malformed or insufficient for the requested computation."""


class DegenerateFitError(DataError):
    """The within-subgroup regression fits the data perfectly (zero residual)."""


class MissingStatisticError(DataError):
    """A summary lacks a quantity the requested model needs (e.g. sigma_hat for ES)."""


class SeparationError(DataError):
    """The logistic likelihood has no finite maximiser."""


class ConvergenceError(HetBFError, RuntimeError):
    """An iterative optimiser failed to reach its tolerance."""


class QuadratureError(HetBFError, RuntimeError):
    """Adaptive quadrature ran out of budget before reaching tolerance.

    Attributes
    ----------
    estimate : float
        Best available log-value of the integral.
    rel_error : float
        Achieved relative error estimate.
    """

    def __init__(self, message, estimate=float("nan"), rel_error=float("inf")):
        super().__init__(message)
        self.estimate = estimate
        self.rel_error = rel_error
