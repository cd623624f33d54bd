# # The MSM kernel and its spectrum
#
# A Matern-1/2 spectral mixture kernel is an exponential envelope times a
# weighted sum of cosines. Its spectral density is a sum of Lorentzian bumps,
# one pair per cosine, and it integrates to k(0).
#
# Run with `python demos/01_kernel_spectra.py [outdir]`.

# +
import sys
from pathlib import Path

import numpy as np

from gpss.kernel import MsmKernelParams, gram, msm_eval, spectral_density, write_kernel_curves

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(exist_ok=True)
# -

# A harmonic source at 220 Hz with four partials of decaying weight.

k = MsmKernelParams.from_hz(variance=1.0, lengthscale=0.05,
                            weights=[0.5, 0.25, 0.15, 0.1],
                            freqs_hz=[220.0, 440.0, 660.0, 880.0])
print("k(0) =", k.k0)
print("k at 0, 1, 2, 5 ms:", np.round(msm_eval(k, np.array([0, 1, 2, 5]) * 1e-3), 4))

# The density peaks sit on the partials.

f = np.linspace(0.0, 1200.0, 120001)
s = spectral_density(k, 2 * np.pi * f)
peaks = [i for i in range(1, f.size - 1) if s[i - 1] < s[i] >= s[i + 1]]
print("density peaks (Hz):", np.round(f[peaks], 2))

# Integrated over all angular frequencies it returns k(0). The tails are heavy
# (1/w^2), so a wide grid is needed.

w = np.linspace(-2e5, 2e5, 2_000_001)
print("integral of S over +-200k rad/s: {:.4f}".format(np.trapezoid(spectral_density(k, w), w)))

# A Gram matrix on a 16 kHz grid is symmetric positive definite.

t = np.arange(400) / 16000.0
K = gram(k, t)
print("smallest eigenvalue of a 400 x 400 Gram: {:.3e}".format(np.linalg.eigvalsh(K)[0]))

# Plot-ready curves: the kernel against lag and the log spectral density.

write_kernel_curves(out / "kernel_curves.csv", k, max_lag=0.03, sample_rate=16000.0)
print("wrote", out / "kernel_curves.csv")
