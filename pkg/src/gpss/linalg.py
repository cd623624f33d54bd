"""Cholesky with a relative-jitter fallback, plus small helpers."""

import numpy as np
import scipy.linalg as la

from .errors import ConditioningError

JITTER_START = 1e-10
JITTER_MAX = 1e-4


def jitchol(A, scale=None):
    """Lower Cholesky factor of ``A``, adding diagonal jitter if needed.

    The plain factorization is tried first. On failure ``eps * scale * I`` is
    added with ``eps`` growing from 1e-10 by factors of ten up to 1e-4.
    ``scale`` defaults to the mean of the diagonal.

    Returns
    -------
    L : ndarray
        Lower triangular factor.
    jitter : float
        Absolute jitter that was added (0.0 when none was needed).
    """
    A = np.asarray(A, dtype=float)
    try:
        return la.cholesky(A, lower=True, check_finite=False), 0.0
    except la.LinAlgError:
        pass
    if not np.all(np.isfinite(A)):
        raise ConditioningError("matrix has non-finite entries")

    if scale is None:
        scale = float(np.mean(np.diag(A)))
    scale = abs(scale) if scale else 1.0
    eps = JITTER_START
    idx = np.diag_indices_from(A)
    while eps <= JITTER_MAX * (1 + 1e-9):
        Aj = A.copy()
        Aj[idx] += eps * scale
        try:
            return la.cholesky(Aj, lower=True, check_finite=False), eps * scale
        except la.LinAlgError:
            eps *= 10
    raise ConditioningError(
        "Cholesky failed after adding relative jitter {:g}".format(JITTER_MAX))


def logdet_chol(L):
    """log|A| from the Cholesky factor of ``A``."""
    return 2.0 * np.sum(np.log(np.diag(L)))


def solve_lower(L, B):
    return la.solve_triangular(L, B, lower=True, check_finite=False)


def solve_upper_t(L, B):
    """Solve ``L^T X = B`` for lower triangular ``L``."""
    return la.solve_triangular(L, B, lower=True, trans="T", check_finite=False)


def chol_inverse(L):
    """Inverse of ``A = L L^T`` computed from its lower Cholesky factor."""
    inv, info = la.lapack.dpotri(L, lower=1)
    if info != 0:
        raise ConditioningError("dpotri failed with info={}".format(info))
    inv = np.tril(inv)
    return inv + np.tril(inv, -1).T
