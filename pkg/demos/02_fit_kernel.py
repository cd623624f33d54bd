# # Fitting a kernel to an isolated recording
#
# The fit matches the model kernel to the empirical autocovariance of a clip
# by least squares. Here the clip is a GP sample from a known kernel, so the
# recovered partials can be checked.

# +
import numpy as np

from gpss.gpcore import GpMixturePrior, sample_prior
from gpss.kernel import MsmKernelParams
from gpss.kernelfit import TrainingClip, estimate_autocovariance, fit_msm

fs = 8000.0
true = MsmKernelParams.from_hz(1.0, 0.05, [0.5, 0.3, 0.2], [300.0, 800.0, 1500.0])
_, x = sample_prior(GpMixturePrior([true], 1e-6), np.arange(6000) / fs, seed=0)
clip = TrainingClip(x, fs)
# -

# The estimator averages lagged products over a window; by default the window
# is the clip length minus the largest lag.

target = estimate_autocovariance(clip, max_lag=0.03)
print("lags:", target.lags.size, " C(0) = {:.3f}".format(target.values[0]))

# Fit with increasing numbers of components. Three is enough here; extra
# components get small weights.

for D in (1, 2, 3, 5):
    rep = fit_msm(target, D, seed=0)
    p = rep.params
    print("D={}  mse={:.2e}  lengthscale={:.4f}".format(D, rep.final_mse, p.lengthscale))
    for w, hz in sorted(zip(p.weights, p.freqs_hz), key=lambda a: -a[0]):
        print("    {:8.1f} Hz  weight {:.3f}".format(hz, w))
