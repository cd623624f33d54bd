"""Exception types raised by gpss."""

import numpy as np


class GpssError(Exception):
    """Base class for all gpss errors."""


class ParameterError(GpssError, ValueError):
    """A parameter lies outside its valid domain."""


class InputSizeError(GpssError, ValueError):
    """Input arrays are too short or have mismatched lengths."""


class DegenerateSignalError(GpssError, ValueError):
    """The signal carries no energy (e.g. an all-zero clip)."""


class DegenerateReferenceError(GpssError, ValueError):
    """A reference source has zero norm."""


class ConditioningError(GpssError, np.linalg.LinAlgError):
    """Cholesky factorization failed even after the maximum jitter."""


class FitFailure(GpssError, RuntimeError):
    """Kernel fitting hit a non-finite objective.

    The best iterate seen before the failure is kept on ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class OptimizationError(GpssError, RuntimeError):
    """Variance learning hit a non-finite bound; ``best`` holds the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
