"""End-to-end experiment drivers: kernel-count sweeps and sparse-vs-full timing."""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import framing, kernelfit
from .evaluation import bss_eval
from .gpcore import GpMixturePrior

logger = logging.getLogger(__name__)


def fit_source_kernels(clips, sample_rate, D, seed=0, max_lag=kernelfit.DEFAULT_MAX_LAG):
    """Fit one MSM kernel per isolated clip; returns the fit reports."""
    return [kernelfit.fit_clip(kernelfit.TrainingClip(c, sample_rate), D, seed=seed,
                               max_lag=max_lag) for c in clips]


def template_prior(reports, noise_variance=1e-3):
    """Prior built from fitted kernels. The noise level is only a placeholder;
    :func:`framing.separate` sets it per frame."""
    return GpMixturePrior([r.params for r in reports], noise_variance)


@dataclass
class SweepRow:
    D: int
    metrics: list
    fit_mse: list
    learn_seconds: float
    result: framing.SeparationResult = field(default=None, repr=False)

    def medians(self):
        arr = np.array([[m.sdr, m.sir, m.sar, m.rmse] for m in self.metrics])
        return dict(zip(("sdr", "sir", "sar", "rmse"), np.median(arr, axis=0)))


def d_sweep(bench, clips, sweep, seed=0, max_lag=kernelfit.DEFAULT_MAX_LAG,
            frame_seconds=0.125, overlap=0.5, options=None, keep_results=False):
    """Refit kernels with each component count in ``sweep`` and separate ``bench``."""
    fs = bench.metadata["sample_rate"]
    plan = framing.make_plan(bench.mixture.size, fs, frame_seconds, overlap)
    rows = []
    for D in sweep:
        reports = fit_source_kernels(clips, fs, D, seed=seed, max_lag=max_lag)
        res = framing.separate(bench.mixture, plan, template_prior(reports), options)
        metrics = bss_eval(bench.true_sources, res.sources)
        logger.info("D=%d median SDR %.2f dB", D, np.median([m.sdr for m in metrics]))
        rows.append(SweepRow(D=int(D), metrics=metrics, fit_mse=[r.final_mse for r in reports],
                             learn_seconds=res.learn_seconds,
                             result=res if keep_results else None))
    return rows


@dataclass
class TimingComparison:
    sparse: framing.SeparationResult
    full: framing.SeparationResult
    sparse_seconds: float
    full_seconds: float

    @property
    def speedup(self):
        return self.full_seconds / self.sparse_seconds

    @property
    def reduction_percent(self):
        return 100.0 * (1.0 - self.sparse_seconds / self.full_seconds)


def sparse_vs_full(mixture, plan, prior, options=None):
    """Separate with the sparse bound and with the exact likelihood.

    Times cover variance learning only (summed over frames).
    """
    options = options or framing.SeparateOptions()
    sparse = framing.separate(mixture, plan, prior, replace(options, full=False))
    full = framing.separate(mixture, plan, prior, replace(options, full=True))
    return TimingComparison(sparse=sparse, full=full, sparse_seconds=sparse.learn_seconds,
                            full_seconds=full.learn_seconds)
