import numpy as np
import pytest

from gpss.gpcore import GpMixturePrior
from gpss.kernel import MsmKernelParams

ACCEPTANCE_LINES = []


def random_msm(rng, D=None, max_hz=3000.0):
    D = D or int(rng.integers(1, 5))
    return MsmKernelParams.from_hz(
        variance=float(rng.uniform(0.2, 2.0)),
        lengthscale=float(rng.uniform(0.002, 0.05)),
        weights=rng.uniform(0.1, 1.0, D),
        freqs_hz=rng.uniform(0.0, max_hz, D),
    )


def random_prior(rng, J=None, noise=None):
    J = J or int(rng.integers(1, 4))
    kernels = [random_msm(rng) for _ in range(J)]
    nv = noise if noise is not None else float(10 ** rng.uniform(-3, -1))
    return GpMixturePrior(kernels, nv)


def frame_times(n, rate=16000.0, t0=0.0):
    return t0 + np.arange(n) / rate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
