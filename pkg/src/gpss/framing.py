"""Frame-wise separation and overlap-add resynthesis.

Frames are taken with a rectangular analysis window: the GP sees the raw
samples. Posterior source means are weighted by a synthesis window whose
shifted copies sum to one, and the output is divided by the realized window
sum so the first and last frames keep their amplitude.
"""

import json
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gpcore, sparsevi
from .errors import GpssError, InputSizeError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FramePlan:
    n: int
    sample_rate: float
    frame_length: int
    hop: int
    window: np.ndarray = field(repr=False)
    pad_policy: str = "zero-tail"

    @property
    def W(self):
        if self.n <= self.frame_length:
            return 1
        return int(math.ceil((self.n - self.frame_length) / self.hop)) + 1

    @property
    def padded_length(self):
        return (self.W - 1) * self.hop + self.frame_length

    def frame_times(self, w):
        return (w * self.hop + np.arange(self.frame_length)) / self.sample_rate

    def window_sum(self):
        acc = np.zeros(self.padded_length)
        for w in range(self.W):
            acc[w * self.hop:w * self.hop + self.frame_length] += self.window
        return acc


def cola_window(frame_length, hop):
    """Sine-squared window rescaled so copies shifted by ``hop`` sum to one.

    With ``hop == frame_length`` this is the rectangular window.
    """
    if not 0 < hop <= frame_length:
        raise ParameterError("need 0 < hop <= frame_length")
    if hop == frame_length:
        return np.ones(frame_length)
    n = np.arange(frame_length)
    base = np.sin(math.pi * (n + 0.5) / frame_length) ** 2
    residue_sum = np.zeros(hop)
    np.add.at(residue_sum, n % hop, base)
    return base / residue_sum[n % hop]


def make_plan(n, sample_rate, frame_seconds=0.125, overlap=0.5):
    """Frame layout for a signal of ``n`` samples.

    The frame length is ``round(frame_seconds * rate)`` bumped to the next
    odd number (2001 samples at 16 kHz and 125 ms).
    """
    n = int(n)
    if n < 1:
        raise ParameterError("signal must have at least one sample")
    if not 0 <= overlap < 1:
        raise ParameterError("overlap must lie in [0, 1)")
    if not (sample_rate > 0 and frame_seconds > 0):
        raise ParameterError("sample_rate and frame_seconds must be > 0")
    length = int(round(frame_seconds * sample_rate))
    if length % 2 == 0:
        length += 1
    hop = int(round(length * (1.0 - overlap)))
    if hop <= 0:
        raise ParameterError("overlap {} leaves no hop at frame length {}".format(overlap, length))
    return FramePlan(n=n, sample_rate=float(sample_rate), frame_length=length, hop=hop,
                     window=cola_window(length, hop))


def _padded(y, plan):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != plan.n:
        raise InputSizeError("signal length {} does not match plan ({})".format(y.size, plan.n))
    out = np.zeros(plan.padded_length)
    out[:plan.n] = y
    return out


def extract_frames(y, plan):
    """List of ``(times, values)`` for every frame; the tail is zero-padded."""
    yp = _padded(y, plan)
    N, hop = plan.frame_length, plan.hop
    return [(plan.frame_times(w), yp[w * hop:w * hop + N].copy()) for w in range(plan.W)]


def overlap_add(frames, plan):
    """Window, shift and sum frames; normalize by the realized window sum."""
    frames = list(frames)
    if len(frames) != plan.W:
        raise InputSizeError("expected {} frames, got {}".format(plan.W, len(frames)))
    acc = np.zeros(plan.padded_length)
    N, hop = plan.frame_length, plan.hop
    for w, fr in enumerate(frames):
        fr = np.asarray(fr, dtype=float)
        if fr.shape != (N,):
            raise InputSizeError("frame {} has shape {}, expected ({},)".format(w, fr.shape, N))
        acc[w * hop:w * hop + N] += plan.window * fr
    wsum = plan.window_sum()
    nz = wsum > 0
    acc[nz] /= wsum[nz]
    return acc[:plan.n]


# ---------------------------------------------------------------------------
# separation pipeline
# ---------------------------------------------------------------------------

@dataclass
class SeparateOptions:
    """Per-run settings for :func:`separate`.

    ``m_max`` caps the number of inducing points (default: a quarter of the
    frame). ``full`` learns variances with the exact O(n^3) likelihood
    instead of the sparse bound. ``noise_variance`` fixes the per-frame noise
    level; by default it is 1e-3 of the frame's sample variance.
    """

    m_max: int = None
    full: bool = False
    free_noise: bool = False
    noise_variance: float = None
    strict: bool = False
    jobs: int = 1
    maxiter: int = 500
    ftol: float = 1e-7


@dataclass
class FrameRecord:
    w: int
    elbo: float
    sigma2: list
    m: int
    ms: float
    noise_variance: float = None
    silent: list = None
    residual: float = None
    iterations: int = 0
    error: str = None

    def to_json(self, with_timing=True):
        d = {"w": self.w, "elbo": self.elbo, "sigma2": self.sigma2, "m": self.m}
        if with_timing:
            d["ms"] = self.ms
        d.update({"noise_variance": self.noise_variance, "silent": self.silent,
                  "residual": self.residual, "iterations": self.iterations})
        if self.error:
            d["error"] = self.error
        return d


@dataclass
class SeparationResult:
    sources: np.ndarray
    per_frame: list
    plan: FramePlan
    prior_template: gpcore.GpMixturePrior

    @property
    def learn_seconds(self):
        return sum(r.ms for r in self.per_frame) / 1000.0

    def frame_priors(self):
        """Learned prior of every frame, rebuilt from the records."""
        return [self.prior_template.with_variances(r.sigma2, r.noise_variance)
                for r in self.per_frame]


def _frame_prior(template, frame_y, options):
    nv = options.noise_variance
    if nv is None:
        nv = sparsevi.default_noise_variance(frame_y)
    return template.with_variances(template.variances, nv)


def _learn_frame(w, t, yf, template, options):
    prior = _frame_prior(template, yf, options)
    J = template.J
    free = gpcore.variance_mask(J, options.free_noise)
    if not np.any(yf):
        floor = (template.variances * gpcore.SILENT_FLOOR).tolist()
        return prior.with_variances(floor), FrameRecord(
            w=w, elbo=None, sigma2=floor, m=0, ms=0.0, noise_variance=prior.noise_variance,
            silent=[True] * J, residual=0.0)

    start = time.perf_counter()
    if options.full:
        rep = gpcore.learn_variances_exact(prior, t, yf, free, options.maxiter, options.ftol)
        m = t.size
    else:
        m_max = options.m_max or max(1, t.size // 4)
        inducing = sparsevi.select_inducing_extrema(yf, t, m_max)
        rep = sparsevi.learn_variances(prior, t, yf, inducing, free, options.maxiter, options.ftol)
        m = inducing.m
    ms = (time.perf_counter() - start) * 1000.0
    learned = rep.learned
    return learned, FrameRecord(
        w=w, elbo=float(rep.value), sigma2=learned.variances.tolist(), m=int(m), ms=ms,
        noise_variance=learned.noise_variance, silent=list(rep.silent),
        iterations=int(rep.iterations))


def _reconstruct_frame(prior, t, yf):
    if not np.any(yf):
        return np.zeros((prior.J, yf.size)), np.zeros(yf.size)
    post = gpcore.posterior(prior, t, yf, want_variance=False)
    return post.source_means, post.mixture_mean


def _process(args):
    w, (t, yf), template, options = args
    try:
        prior, rec = _learn_frame(w, t, yf, template, options)
        means, mix = _reconstruct_frame(prior, t, yf)
        rec.residual = float(np.linalg.norm(means.sum(axis=0) - yf))
        return means, rec
    except GpssError as exc:
        if options.strict:
            raise
        warnings.warn("frame {} failed ({}); substituting zeros".format(w, exc))
        rec = FrameRecord(w=w, elbo=None, sigma2=template.variances.tolist(), m=0, ms=0.0,
                          error=str(exc))
        return np.zeros((template.J, yf.size)), rec


def _map(fn, items, jobs):
    if jobs is None or jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def separate(y, plan, prior_template, options=None):
    """Separate a mixture into ``J`` sources frame by frame.

    For each frame the source variances are learned (sparse bound by
    default), exact posterior source means are computed with the learned
    prior, and the frames are overlap-added. The result does not depend on
    ``options.jobs``.
    """
    options = options or SeparateOptions()
    frames = extract_frames(y, plan)
    results = _map(_process, [(w, fr, prior_template, options) for w, fr in enumerate(frames)],
                   options.jobs)
    J = prior_template.J
    sources = np.array([overlap_add([r[0][j] for r in results], plan) for j in range(J)])
    return SeparationResult(sources=sources, per_frame=[r[1] for r in results], plan=plan,
                            prior_template=prior_template)


def reconstruct(y, plan, frame_priors, jobs=1):
    """Posterior means with given per-frame priors (no learning), overlap-added.

    Linear in ``y`` for fixed priors.
    """
    frames = extract_frames(y, plan)
    if len(frame_priors) != len(frames):
        raise InputSizeError("need one prior per frame")
    res = _map(lambda a: _reconstruct_frame(a[0], *a[1]), list(zip(frame_priors, frames)), jobs)
    J = frame_priors[0].J
    return np.array([overlap_add([r[0][j] for r in res], plan) for j in range(J)])


def write_run_log(path, result, with_timing=True):
    """One JSON object per frame."""
    with open(path, "w") as fh:
        for rec in result.per_frame:
            fh.write(json.dumps(rec.to_json(with_timing)) + "\n")
