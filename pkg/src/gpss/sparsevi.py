"""Collapsed variational bound with fixed inducing points.

For a frame ``(t, y)`` and inducing inputs ``z`` the bound is

    L = log N(y | 0, Q + nu2 I) - tr(K_nn - Q) / (2 nu2),   Q = K_nm K_mm^{-1} K_mn

with every ``K`` built from the mixture kernel ``k_f = sum_j k_j``. All work
is done with ``m x m`` factorizations: one direct evaluation costs O(n m^2),
and during learning each step costs O(m^3) once the frame is reduced.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel as kern
from .errors import ParameterError
from .gpcore import LOG_2PI, GpMixturePrior, check_mask, learn_loop, variance_mask
from .linalg import chol_inverse, jitchol, solve_lower, solve_upper_t

NOISE_INIT_FRACTION = 1e-3
NOISE_FLOOR = 1e-12


@dataclass(frozen=True)
class InducingSet:
    """Sorted, unique inducing times (seconds)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.unique(np.atleast_1d(np.asarray(self.points, dtype=float)))
        if pts.size < 1:
            raise ParameterError("inducing set must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("inducing points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def m(self):
        return self.points.size

    def __len__(self):
        return self.points.size


@dataclass
class ElboReport:
    value: float
    fit_term: float
    trace_term: float
    learned: GpMixturePrior
    iterations: int = 0
    converged: bool = True
    trace: list = field(default_factory=list)
    silent: tuple = ()
    m: int = 0


def _uniform_indices(n, m):
    m = max(1, min(int(m), n))
    return np.unique(np.round(np.linspace(0, n - 1, m)).astype(int))


def select_inducing_extrema(frame_y, frame_t, m_max):
    """Inducing points at strict local extrema of the frame.

    Keeps the ``m_max`` extrema with the largest ``|y|`` (earlier time wins
    ties). With fewer than two extrema, falls back to ``m_max`` points on a
    uniform grid of frame samples.
    """
    y = np.asarray(frame_y, dtype=float)
    t = np.asarray(frame_t, dtype=float)
    if y.ndim != 1 or y.shape != t.shape or y.size < 3:
        raise ParameterError("frame must be 1-D with at least 3 samples")
    m_max = int(m_max)
    if m_max < 1:
        raise ParameterError("m_max must be >= 1")

    mid = y[1:-1]
    is_max = (mid > y[:-2]) & (mid > y[2:])
    is_min = (mid < y[:-2]) & (mid < y[2:])
    idx = np.flatnonzero(is_max | is_min) + 1
    if idx.size < 2:
        return InducingSet(t[_uniform_indices(y.size, m_max)])
    if idx.size > m_max:
        order = np.argsort(-np.abs(y[idx]), kind="stable")
        idx = np.sort(idx[order[:m_max]])
    return InducingSet(t[idx])


def default_noise_variance(frame_y):
    return max(NOISE_INIT_FRACTION * float(np.var(frame_y)), NOISE_FLOOR)


class SparseFrame:
    """Bound evaluation for one frame and a fixed inducing set.

    Only the variances change during learning, and ``K_mn = sum_j s_j U_j``
    is linear in them (``U_j`` is the unit-variance cross covariance). The
    constructor therefore reduces the frame to m x m statistics
    ``U_j U_k^T`` and ``U_j y`` in O(J^2 n m^2); afterwards each bound and
    gradient evaluation costs O(m^3) regardless of the frame length.
    """

    def __init__(self, prior, frame_t, frame_y, inducing):
        t = np.asarray(frame_t, dtype=float)
        y = np.asarray(frame_y, dtype=float)
        if t.ndim != 1 or t.shape != y.shape:
            raise ParameterError("frame times and values must be 1-D with equal length")
        z = inducing.points
        if z.size > t.size:
            raise ParameterError("m must not exceed the frame length")
        self.prior = prior
        self.y = y
        self.n = y.size
        self.m = z.size
        self.yy = float(y @ y)
        units = [k.with_variance(1.0) for k in prior.kernels]
        J = len(units)
        self.U = [np.ascontiguousarray(kern.gram(u, z, t)) for u in units]
        self.M = [kern.gram(u, z) for u in units]
        self.k0 = np.array([u.k0 for u in units])
        self.b = [U @ y for U in self.U]
        self.G = [[None] * J for _ in range(J)]
        for j in range(J):
            for k in range(j, J):
                self.G[j][k] = self.U[j] @ self.U[k].T
                self.G[k][j] = self.G[j][k].T

    def value_direct(self, log_params):
        """Bound value and its two terms from the explicit m x n cross covariance."""
        variances = np.exp(log_params[:-1])
        nu2 = math.exp(log_params[-1])
        n = self.n
        Kmn = sum(v * U for v, U in zip(variances, self.U))
        Kmm = sum(v * M for v, M in zip(variances, self.M))
        Lm, _ = jitchol(Kmm, scale=float(variances @ self.k0))
        A = solve_lower(Lm, Kmn) / math.sqrt(nu2)
        AAT = A @ A.T
        B = AAT + np.eye(self.m)
        LB, _ = jitchol(B)
        c = solve_lower(LB, A @ self.y) / math.sqrt(nu2)
        fit = (-0.5 * n * LOG_2PI - np.sum(np.log(np.diag(LB))) - 0.5 * n * math.log(nu2)
               - 0.5 * self.yy / nu2 + 0.5 * c @ c)
        trace_term = -0.5 * (n * float(variances @ self.k0) - nu2 * np.trace(AAT)) / nu2
        return fit + trace_term, fit, trace_term

    def evaluate(self, log_params, want_grad=True):
        """Bound value, its two terms and the gradient w.r.t. log variances."""
        s = np.exp(log_params[:-1])
        nu2 = math.exp(log_params[-1])
        nu = math.sqrt(nu2)
        n, m, J = self.n, self.m, len(s)

        # Psi_j = U_j K_nm, Psi = K_mn K_nm, b = K_mn y
        Psi_j = [sum(s[k] * self.G[j][k] for k in range(J)) for j in range(J)]
        Psi = sum(s[j] * Psi_j[j] for j in range(J))
        Psi = 0.5 * (Psi + Psi.T)
        b = sum(s[j] * self.b[j] for j in range(J))
        Kmm = sum(s[j] * self.M[j] for j in range(J))
        Lm, _ = jitchol(Kmm, scale=float(s @ self.k0))

        Y = solve_lower(Lm, Psi) / nu                 # A K_nm
        AAT = solve_lower(Lm, Y.T) / nu               # A A^T
        AAT = 0.5 * (AAT + AAT.T)
        B = AAT + np.eye(m)
        LB, _ = jitchol(B)
        Ay = solve_lower(Lm, b) / nu
        c = solve_lower(LB, Ay) / nu

        trace_knn = n * float(s @ self.k0)
        trace_q = nu2 * np.trace(AAT)
        fit = (-0.5 * n * LOG_2PI - np.sum(np.log(np.diag(LB))) - 0.5 * n * math.log(nu2)
               - 0.5 * self.yy / nu2 + 0.5 * c @ c)
        trace_term = -0.5 * (trace_knn - trace_q) / nu2
        if not want_grad:
            return fit + trace_term, fit, trace_term, None

        def binv(X):
            return solve_upper_t(LB, solve_lower(LB, X))

        beta = binv(Ay)
        Z = binv(Y)
        Kmm_inv = chol_inverse(Lm)
        # X_j = U_j A^T; w_j = U_j Sigma^{-1} y; T_j = U_j Sigma^{-1} K_nm
        X = [solve_lower(Lm, P.T).T / nu for P in Psi_j]
        w = [(self.b[j] - X[j] @ beta) / nu2 for j in range(J)]
        T = [(Psi_j[j] - X[j] @ Z) / nu2 for j in range(J)]
        v = Kmm_inv @ sum(s[j] * w[j] for j in range(J))
        T_all = sum(s[j] * T[j] for j in range(J))
        PR = Kmm_inv @ T_all @ Kmm_inv
        PPt = Kmm_inv @ Psi @ Kmm_inv

        grad = np.empty(J + 1)
        for j in range(J):
            quad = 2.0 * w[j] @ v - v @ (self.M[j] @ v)
            tr_sinv_dq = 2.0 * np.sum(T[j] * Kmm_inv) - np.sum(PR * self.M[j])
            tr_dq = 2.0 * np.sum(Psi_j[j] * Kmm_inv) - np.sum(PPt * self.M[j])
            tr_dknn = n * self.k0[j]
            grad[j] = s[j] * (0.5 * quad - 0.5 * tr_sinv_dq - 0.5 * (tr_dknn - tr_dq) / nu2)

        alpha2 = (self.yy - 2.0 * Ay @ beta + beta @ (AAT @ beta)) / nu2 ** 2
        tr_sinv = (n - np.sum(binv(AAT).diagonal())) / nu2
        grad[-1] = nu2 * (0.5 * alpha2 - 0.5 * tr_sinv
                          + 0.5 * (trace_knn - trace_q) / nu2 ** 2)
        return fit + trace_term, fit, trace_term, grad


def _log_params(prior):
    return np.log(np.append(prior.variances, prior.noise_variance))


def elbo(prior, frame_t, frame_y, inducing):
    """Evaluate the collapsed bound at the given prior."""
    sf = SparseFrame(prior, frame_t, frame_y, inducing)
    value, fit, tr = sf.value_direct(_log_params(prior))
    return ElboReport(value=float(value), fit_term=float(fit), trace_term=float(tr),
                      learned=prior, m=inducing.m)


def elbo_and_grad(prior, frame_t, frame_y, inducing):
    """Bound value and gradient w.r.t. ``[log sigma2_1..J, log nu2]``."""
    sf = SparseFrame(prior, frame_t, frame_y, inducing)
    value, _, _, grad = sf.evaluate(_log_params(prior))
    return float(value), grad


def learn_variances(prior, frame_t, frame_y, inducing, free=None, maxiter=500, ftol=1e-7):
    """Maximize the bound over the free log variances.

    ``free`` is a mask of J + 1 booleans over ``(sigma2_1..sigma2_J, nu2)``;
    by default every source variance is free and the noise is frozen. The
    inducing points stay fixed.
    """
    if free is None:
        free = variance_mask(prior.J)
    free = check_mask(free, prior.J)
    sf = SparseFrame(prior, frame_t, frame_y, inducing)

    def objective(log_params):
        value, _, _, grad = sf.evaluate(log_params)
        return value, grad

    rep = learn_loop(prior, free, objective, maxiter, ftol)
    value, fit, tr = sf.value_direct(_log_params(rep.learned))
    return ElboReport(value=float(value), fit_term=float(fit), trace_term=float(tr),
                      learned=rep.learned, iterations=rep.iterations, converged=rep.converged,
                      trace=rep.trace, silent=rep.silent, m=inducing.m)
