"""Fit MSM kernels to isolated source recordings.

The source is treated as a zero-mean covariance-ergodic process, so its
autocovariance is estimated by a time average over one recording. An MSM
kernel is then fitted to that estimate by least squares.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import correlate, find_peaks

from ._optim import NonFiniteObjective, minimize_lbfgs
from .errors import DegenerateSignalError, FitFailure, InputSizeError, ParameterError
from .kernel import TWO_PI, MsmKernelParams, msm_eval

DEFAULT_MAX_LAG = 0.030
N_RESTARTS = 4
# components below this fraction of the largest weight are reseeded on restart
DEAD_WEIGHT = 1e-2


@dataclass(frozen=True)
class TrainingClip:
    """Isolated recording of one source; the mean is removed on construction."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        g = np.asarray(self.samples, dtype=float).ravel()
        if g.size < 2:
            raise InputSizeError("a training clip needs at least 2 samples")
        if not np.all(np.isfinite(g)):
            raise ParameterError("training samples must be finite")
        if not (self.sample_rate > 0):
            raise ParameterError("sample_rate must be > 0")
        object.__setattr__(self, "samples", g - g.mean())
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    @property
    def times(self):
        return np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True)
class AutocovEstimate:
    lags: np.ndarray
    values: np.ndarray
    window_seconds: float

    @property
    def n(self):
        return self.lags.size

    @property
    def max_lag(self):
        return float(self.lags[-1])

    @property
    def sample_rate(self):
        if self.lags.size < 2:
            return float("nan")
        return 1.0 / (self.lags[1] - self.lags[0])


@dataclass
class FitReport:
    params: MsmKernelParams
    final_mse: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)
    seed: int = 0


def estimate_autocovariance(clip, max_lag=DEFAULT_MAX_LAG, window=None):
    """Biased time-average autocovariance on the sample grid.

    ``C[k] = (1/M) sum_{i<M} g[i + k] g[i]`` for ``k = 0 .. floor(max_lag*fs)``
    with ``M = floor(window * fs)``. ``window`` defaults to the clip duration
    minus ``max_lag``.
    """
    fs = clip.sample_rate
    n_c = int(math.floor(max_lag * fs + 1e-9)) + 1
    if window is None:
        M = clip.samples.size - (n_c - 1)
    else:
        if window <= 0:
            raise ParameterError("window must be > 0")
        M = int(math.floor(window * fs + 1e-9))
    if M < 1 or M + n_c - 1 > clip.samples.size:
        raise InputSizeError(
            "clip of {} samples is too short for max_lag={} s and window={} s".format(
                clip.samples.size, max_lag, window))
    g = clip.samples
    if not np.any(g[:M + n_c - 1]):
        raise DegenerateSignalError("training clip is silent")
    sums = correlate(g[:M + n_c - 1], g[:M], mode="valid")
    values = sums / M
    if not values[0] > 0:
        raise DegenerateSignalError("zero-lag autocovariance is not positive")
    return AutocovEstimate(lags=np.arange(n_c) / fs, values=values, window_seconds=M / fs)


def mse(params, target):
    """Mean squared error between the kernel and the autocovariance estimate."""
    r = msm_eval(params, target.lags) - target.values
    return float(np.mean(r * r))


def _spectrum_peaks(target, values=None):
    if values is None:
        values = target.values
    nfft = 1 << int(math.ceil(math.log2(max(4096, 8 * target.n))))
    mag = np.abs(np.fft.rfft(values, nfft))
    freqs = np.fft.rfftfreq(nfft, d=1.0 / target.sample_rate)
    peaks, _ = find_peaks(mag)
    if mag.size > 1 and mag[0] > mag[1]:
        peaks = np.concatenate([[0], peaks])
    # largest magnitude first; stable sort keeps the lower frequency on ties,
    # with magnitudes rounded so FFT round-off does not break exact ties
    top = mag[peaks].max() if peaks.size else 1.0
    key = np.round(mag[peaks] / (top if top > 0 else 1.0), 10)
    order = np.argsort(-key, kind="stable")
    return freqs[peaks[order]], mag[peaks[order]]


def init_msm(target, D, seed=0):
    """Initial parameters from the largest spectral peaks of the estimate.

    Frequencies sit on the ``D`` largest peaks of the zero-padded DFT of the
    autocovariance values, weights are proportional to peak magnitude and
    sum to one, the variance is ``C(0)`` and the lengthscale ``max_lag / 3``.
    Missing peaks are filled with seeded uniform draws over (0, Nyquist).
    """
    D = int(D)
    if D < 1:
        raise ParameterError("D must be >= 1")
    f_hz, mags = _spectrum_peaks(target)
    f_hz, mags = list(f_hz[:D]), list(mags[:D])
    if len(f_hz) < D:
        rng = np.random.default_rng(seed)
        nyq = target.sample_rate / 2.0
        floor = min(mags) if mags else 1.0
        taken = set(f_hz)
        while len(f_hz) < D:
            f = float(rng.uniform(0.0, nyq))
            if f in taken:
                continue
            taken.add(f)
            f_hz.append(f)
            mags.append(floor)
    mags = np.asarray(mags, dtype=float)
    if not np.any(mags > 0):
        mags = np.ones_like(mags)
    weights = mags / mags.sum()
    lengthscale = target.max_lag / 3.0 if target.max_lag > 0 else 1.0 / target.sample_rate
    return MsmKernelParams(float(target.values[0]), lengthscale, weights,
                           TWO_PI * np.asarray(f_hz))


class _MseObjective:
    """Scaled MSE in unconstrained coordinates.

    ``x = [log sigma2, log ell, log w_1..w_D, u_1..u_D]`` with
    ``omega_d = u_d / max_lag``. Positive quantities live on a log scale,
    frequencies are bounded to [0, Nyquist]. The objective is divided by
    ``C(0)^2`` so optimizer tolerances do not depend on signal level.
    """

    def __init__(self, target):
        self.tau = target.lags
        self.c = target.values
        self.scale = float(target.values[0]) ** 2
        self.tmax = target.max_lag if target.max_lag > 0 else 1.0
        self.nyq = math.pi * target.sample_rate

    def pack(self, p):
        # log(0) is not representable; a zero weight becomes a tiny one
        w = np.maximum(p.weights_array, 1e-300)
        return np.concatenate([[math.log(p.variance), math.log(p.lengthscale)],
                               np.log(w), p.freqs_array * self.tmax])

    def unpack(self, x):
        D = (x.size - 2) // 2
        return MsmKernelParams(math.exp(x[0]), math.exp(x[1]), np.exp(x[2:2 + D]),
                               np.maximum(x[2 + D:], 0.0) / self.tmax)

    def bounds(self, D):
        return [(None, None), (None, None)] + [(None, None)] * D + [(0.0, self.nyq * self.tmax)] * D

    def __call__(self, x):
        D = (x.size - 2) // 2
        s2, ell = math.exp(x[0]), math.exp(x[1])
        w = np.exp(x[2:2 + D])
        om = x[2 + D:] / self.tmax
        tau = self.tau
        env = s2 * np.exp(-tau / ell)
        phase = np.outer(tau, om)
        cos, sin = np.cos(phase), np.sin(phase)
        k = env * (cos @ w)
        r = k - self.c
        N = tau.size
        f = float(r @ r) / N / self.scale
        coef = 2.0 / N / self.scale
        g = np.empty_like(x)
        g[0] = coef * (r @ k)
        g[1] = coef * (r @ (k * tau / ell))
        g[2:2 + D] = coef * ((r * env) @ cos) * w
        g[2 + D:] = -coef * ((r * env * tau) @ sin) * w / self.tmax
        return f, g


def _perturb(p, rng, target):
    nyq = TWO_PI * target.sample_rate / 2.0
    freqs = p.freqs_array * np.exp(rng.normal(0.0, 0.02, p.D))
    freqs = np.clip(freqs, 0.0, nyq)
    weights = p.weights_array * np.exp(rng.normal(0.0, 0.3, p.D))
    ell = p.lengthscale * math.exp(rng.normal(0.0, 0.7))
    return MsmKernelParams(p.variance, ell, weights, freqs)


def _reseed(p, D, target, rng):
    """Move weak components onto the largest peaks of the residual spectrum.

    Components merged away during canonicalization are re-created, so the
    result always has ``D`` components.
    """
    w = p.weights_array
    alive = w >= DEAD_WEIGHT * w.max()
    n_dead = D - int(alive.sum())
    if n_dead == 0:
        return _perturb(p, rng, target)
    resid = target.values - p(target.lags)
    f_res, m_res = _spectrum_peaks(target, resid)
    top = _spectrum_peaks(target)[1]
    ref = top[0] if top.size and top[0] > 0 else 1.0
    # a residual peak within one lag-window bin of a live component is a leftover of it
    min_gap = 1.0 / max(target.max_lag, 1.0 / target.sample_rate)
    freqs, weights = list(p.freqs_hz[alive]), list(w[alive])
    for f, mag in zip(f_res, m_res):
        if len(freqs) == D:
            break
        if any(abs(f - g) < min_gap for g in freqs):
            continue
        freqs.append(float(f))
        weights.append(max(w.max() * mag / ref, 1e-12 * w.max()))
    nyq = target.sample_rate / 2.0
    while len(freqs) < D:
        f = float(rng.uniform(0.0, nyq))
        if f not in freqs:
            freqs.append(f)
            weights.append(DEAD_WEIGHT * w.max())
    ell = p.lengthscale * math.exp(rng.normal(0.0, 0.1))
    return MsmKernelParams(p.variance, ell, weights, TWO_PI * np.asarray(freqs))


def _normalize_weights(p):
    total = float(np.sum(p.weights_array))
    return MsmKernelParams(p.variance * total, p.lengthscale, p.weights_array / total, p.freqs)


def _fit_one(target, start, ftol, maxiter):
    obj = _MseObjective(target)
    x0 = obj.pack(start)
    try:
        res = minimize_lbfgs(obj, x0, bounds=obj.bounds(start.D), ftol=ftol, maxiter=maxiter,
                             gtol=1e-12)
    except NonFiniteObjective as exc:
        raise FitFailure("non-finite MSE during kernel fit",
                         best=obj.unpack(exc.x_best)) from exc
    params = obj.unpack(res.x)
    return params, res


def fit_msm(target, D, seed=0, init=None, restarts=N_RESTARTS, ftol=1e-9, maxiter=2000):
    """Fit an MSM kernel with ``D`` components to an autocovariance estimate.

    Runs ``restarts`` L-BFGS-B fits and keeps the lowest MSE, breaking ties
    by restart seed. The first starts from :func:`init_msm` or ``init``.
    Each later one starts from the best fit so far with its negligible
    components moved onto the largest unexplained peaks of the residual
    spectrum, or from a seeded perturbation when no component is negligible. The returned
    weights sum to one, with the overall scale carried by the variance.
    """
    if init is None:
        init = init_msm(target, D, seed)
    elif init.D != D:
        raise ParameterError("init has {} components, expected {}".format(init.D, D))
    best = None
    for r in range(max(1, int(restarts))):
        rseed = int(seed) + r
        if r == 0:
            start = init
        else:
            start = _reseed(best.params, D, target, np.random.default_rng(rseed))
        params, res = _fit_one(target, start, ftol, maxiter)
        params = _normalize_weights(params)
        err = mse(params, target)
        if err > mse(start, target):
            params, err = start, mse(start, target)
        rep = FitReport(params=params, final_mse=err, iterations=res.iterations,
                        converged=res.converged, trace=[f * _obj_scale(target) for f in res.trace],
                        seed=rseed)
        if best is None or (rep.final_mse, rep.seed) < (best.final_mse, best.seed):
            best = rep
    return best


def _obj_scale(target):
    return float(target.values[0]) ** 2


def fit_clip(clip, D, seed=0, max_lag=DEFAULT_MAX_LAG, window=None, **kwargs):
    """Estimate the autocovariance of ``clip`` and fit an MSM kernel to it."""
    return fit_msm(estimate_autocovariance(clip, max_lag, window), D, seed, **kwargs)
