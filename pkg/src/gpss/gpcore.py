"""Exact GP inference on one frame of the mixture.

The mixture ``y = sum_j s_j + eps`` has prior covariance ``H = K_f + nu2 I``
with ``K_f = sum_j K_j``. One Cholesky factor of ``H`` serves the
log-marginal likelihood and every source posterior.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernel as kern
from ._optim import NonFiniteObjective, minimize_lbfgs
from .errors import InputSizeError, OptimizationError, ParameterError
from .linalg import chol_inverse, jitchol, logdet_chol, solve_lower, solve_upper_t

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
VARIANCE_CLAMP_TOL = 1e-10
SILENT_FLOOR = 1e-12


@dataclass(frozen=True)
class GpMixturePrior:
    """J independent zero-mean GP sources observed in white noise."""

    kernels: tuple
    noise_variance: float

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if len(kernels) < 1:
            raise ParameterError("need at least one source kernel")
        for k in kernels:
            if not isinstance(k, kern.MsmKernelParams):
                raise ParameterError("source kernels must be MsmKernelParams")
        nv = float(self.noise_variance)
        if not (np.isfinite(nv) and nv > 0):
            raise ParameterError("noise_variance must be finite and > 0, got {!r}".format(
                self.noise_variance))
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "noise_variance", nv)

    @property
    def J(self):
        return len(self.kernels)

    @property
    def mixture_kernel(self):
        return kern.SumKernel(self.kernels)

    @property
    def variances(self):
        return np.array([k.variance for k in self.kernels])

    def with_variances(self, variances, noise_variance=None):
        variances = np.broadcast_to(np.asarray(variances, dtype=float), (self.J,))
        kernels = tuple(k.with_variance(float(v)) for k, v in zip(self.kernels, variances))
        nv = self.noise_variance if noise_variance is None else noise_variance
        return replace(self, kernels=kernels, noise_variance=nv)


@dataclass
class PosteriorResult:
    """Per-source and mixture posterior summaries on one set of times."""

    source_means: np.ndarray
    source_variances: np.ndarray
    mixture_mean: np.ndarray
    log_marginal: float
    clamped: int = 0
    source_covariances: np.ndarray = field(default=None, repr=False)


def _check_data(times, y):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if times.ndim != 1 or times.shape != y.shape:
        raise InputSizeError("times and y must be 1-D with equal length")
    if times.size < 1:
        raise InputSizeError("need at least one observation")
    return times, y


def unit_grams(prior, times, cols=None):
    """Gram matrices of every source kernel with its variance set to one."""
    return [kern.gram(k.with_variance(1.0), times, cols) for k in prior.kernels]


def _factor_H(prior, grams):
    K_f = sum(v * G for v, G in zip(prior.variances, grams))
    H = K_f.copy()
    H[np.diag_indices_from(H)] += prior.noise_variance
    L, _ = jitchol(H, scale=prior.mixture_kernel.k0 + prior.noise_variance)
    return K_f, L


def _lml_from_chol(L, y):
    a = solve_lower(L, y)
    return -0.5 * (a @ a + logdet_chol(L) + y.size * LOG_2PI)


def log_marginal(prior, times, y):
    """Exact log marginal likelihood ``log N(y | 0, K_f + nu2 I)``."""
    times, y = _check_data(times, y)
    _, L = _factor_H(prior, unit_grams(prior, times))
    return float(_lml_from_chol(L, y))


def posterior(prior, times, y, want_variance=True, full_cov=False):
    """Exact posterior over the mixture function and each source at ``times``.

    Source means are ``K_j H^{-1} y``; the variances are the diagonals of
    ``K_j - K_j H^{-1} K_j``. Round-off negatives down to -1e-10 are clamped
    to zero and counted in ``clamped``. With ``full_cov`` the full posterior
    covariance of every source is returned as well.
    """
    times, y = _check_data(times, y)
    grams = unit_grams(prior, times)
    K_f, L = _factor_H(prior, grams)
    alpha = solve_upper_t(L, solve_lower(L, y))
    lml = -0.5 * (y @ alpha + logdet_chol(L) + y.size * LOG_2PI)

    K_js = [v * G for v, G in zip(prior.variances, grams)]
    means = np.array([K @ alpha for K in K_js])
    mixture_mean = K_f @ alpha

    variances = None
    covs = None
    clamped = 0
    if want_variance or full_cov:
        variances = np.empty_like(means)
        if full_cov:
            covs = np.empty((prior.J, y.size, y.size))
        for j, K in enumerate(K_js):
            V = solve_lower(L, K)
            var = np.diag(K) - np.einsum("ij,ij->j", V, V)
            low = var < 0
            if np.any(var < -VARIANCE_CLAMP_TOL):
                logger.warning("source %d: posterior variance below -%g", j, VARIANCE_CLAMP_TOL)
            clamped += int(np.count_nonzero(low))
            variances[j] = np.where(low, 0.0, var)
            if full_cov:
                covs[j] = K - V.T @ V
    return PosteriorResult(source_means=means, source_variances=variances,
                           mixture_mean=mixture_mean, log_marginal=float(lml),
                           clamped=clamped, source_covariances=covs)


def sample_prior_factors(prior, times):
    """Cholesky factors of every source prior covariance at ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size > 10_000:
        raise InputSizeError("dense prior sampling is limited to 10^4 points")
    return [jitchol(kern.gram(k, times), scale=k.k0)[0] for k in prior.kernels]


def sample_with_factors(factors, rng):
    return np.array([L @ rng.standard_normal(L.shape[0]) for L in factors])


def sample_prior(prior, times, seed):
    """Draw every source from its GP prior and add observation noise.

    Returns ``(sources, mixture)`` with ``sources`` of shape ``(J, n)``.
    """
    factors = sample_prior_factors(prior, times)
    rng = np.random.default_rng(seed)
    sources = sample_with_factors(factors, rng)
    noise = math.sqrt(prior.noise_variance) * rng.standard_normal(sources.shape[1])
    return sources, sources.sum(axis=0) + noise


# ---------------------------------------------------------------------------
# dense hyperparameter learning (full-GP baseline)
# ---------------------------------------------------------------------------

def variance_mask(J, noise=False):
    """Mask freeing every source variance and optionally the noise variance."""
    return tuple([True] * J + [bool(noise)])


def check_mask(free, J):
    free = tuple(bool(f) for f in free)
    if len(free) != J + 1:
        raise ParameterError("mask needs J + 1 = {} entries".format(J + 1))
    if not any(free):
        raise ParameterError("mask must free at least one parameter")
    return free


@dataclass
class LearnReport:
    """Outcome of maximizing a marginal-likelihood objective over variances."""

    value: float
    learned: GpMixturePrior
    iterations: int
    converged: bool
    trace: list
    silent: tuple


def pack_log_params(prior, free):
    full = np.log(np.append(prior.variances, prior.noise_variance))
    return full, np.flatnonzero(free)


def learn_loop(prior, free, objective, maxiter, ftol):
    """Maximize ``objective(log_params) -> (value, grad)`` over the free entries.

    Free variances are bounded below by ``1e-12`` times their initial value;
    a source that ends on that floor is reported as silent.
    """
    J = prior.J
    free = check_mask(free, J)
    full0, idx = pack_log_params(prior, free)
    lower = full0[idx] + math.log(SILENT_FLOOR)
    bounds = [(lo, None) for lo in lower]

    def neg(x):
        full = full0.copy()
        full[idx] = x
        val, grad = objective(full)
        return -val, -grad[idx]

    try:
        res = minimize_lbfgs(neg, full0[idx], bounds=bounds, ftol=ftol, maxiter=maxiter,
                             gtol=1e-9)
    except NonFiniteObjective as exc:
        full = full0.copy()
        full[idx] = exc.x_best
        best = prior.with_variances(np.exp(full[:J]), float(np.exp(full[J])))
        raise OptimizationError("variance learning hit a non-finite bound", best=best) from exc

    full = full0.copy()
    full[idx] = res.x
    at_floor = np.zeros(J + 1, dtype=bool)
    at_floor[idx] = res.x <= lower + 1e-6
    full[idx] = np.where(at_floor[idx], lower, full[idx])
    value = -res.fun
    # the objective is nearly flat as a variance vanishes, so the optimizer
    # can stall short of the floor; pin a source there when that costs nothing
    for i, lo in zip(idx, lower):
        if i == J or at_floor[i]:
            continue
        trial = full.copy()
        trial[i] = lo
        v = objective(trial)[0]
        if np.isfinite(v) and v >= value:
            full, value, at_floor[i] = trial, v, True
    # frozen entries keep their exact initial values (no log/exp round trip)
    values = np.append(prior.variances, prior.noise_variance)
    values[idx] = np.exp(full[idx])
    learned = prior.with_variances(values[:J], float(values[J]))
    silent = tuple(bool(s) for s in at_floor[:J])
    return LearnReport(value=float(value), learned=learned, iterations=res.iterations,
                       converged=res.converged, trace=[-f for f in res.trace], silent=silent)


def log_marginal_and_grad(grams, y, log_params):
    """Log marginal likelihood and its gradient w.r.t. log variances.

    ``log_params`` is ``[log sigma2_1 .. log sigma2_J, log nu2]``.
    """
    variances = np.exp(log_params[:-1])
    nu2 = math.exp(log_params[-1])
    H = sum(v * G for v, G in zip(variances, grams))
    H[np.diag_indices_from(H)] += nu2
    L, _ = jitchol(H)
    alpha = solve_upper_t(L, solve_lower(L, y))
    value = -0.5 * (y @ alpha + logdet_chol(L) + y.size * LOG_2PI)
    Hinv = chol_inverse(L)
    grad = np.empty(len(grams) + 1)
    for j, G in enumerate(grams):
        grad[j] = 0.5 * variances[j] * (alpha @ (G @ alpha) - np.sum(Hinv * G))
    grad[-1] = 0.5 * nu2 * (alpha @ alpha - np.trace(Hinv))
    return float(value), grad


def learn_variances_exact(prior, times, y, free=None, maxiter=500, ftol=1e-7):
    """Learn source (and optionally noise) variances by maximizing the exact
    log marginal likelihood. Costs O(n^3) per iteration."""
    times, y = _check_data(times, y)
    if free is None:
        free = variance_mask(prior.J)
    grams = unit_grams(prior, times)
    return learn_loop(prior, free, lambda p: log_marginal_and_grad(grams, y, p), maxiter, ftol)
