"""Source separation of audio mixtures with additive Gaussian-process priors.

Each source is modelled by a stationary kernel (an exponentially damped sum
of cosines) fitted to an isolated recording. A mixture is cut into
overlapping frames; per frame the source variances are learned from a
sparse variational bound and the exact posterior mean of every source is
overlap-added into the output.

Modules
-------
kernel      MSM kernel, Gram matrices, spectral density, JSON I/O
kernelfit   autocovariance estimation and kernel fitting
gpcore      exact GP posterior, marginal likelihood and sampling
sparsevi    inducing-point bound and variance learning
framing     frame plans, overlap-add and the separation pipeline
evaluation  BSS metrics and synthetic benchmarks
cli         ``gpss`` command-line entry point
"""

from .errors import (ConditioningError, DegenerateReferenceError, DegenerateSignalError,
                     FitFailure, GpssError, InputSizeError, OptimizationError, ParameterError)
from .kernel import MsmKernelParams, SumKernel, gram, load_kernel, save_kernel, spectral_density
from .kernelfit import TrainingClip, estimate_autocovariance, fit_clip, fit_msm, init_msm
from .gpcore import GpMixturePrior, log_marginal, posterior, sample_prior
from .sparsevi import InducingSet, elbo, learn_variances, select_inducing_extrema
from .framing import SeparateOptions, make_plan, overlap_add, reconstruct, separate
from .evaluation import bss_eval, make_benchmark, rmse

__version__ = "0.1.0"
