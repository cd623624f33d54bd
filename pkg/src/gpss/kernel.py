"""Matern-1/2 spectral mixture (MSM) kernels.

The kernel of one source is

    k(tau) = variance * exp(-tau / lengthscale) * sum_d weight_d * cos(omega_d * tau)

with ``tau = |t - t'|``. Its spectral density is a mixture of Lorentzian
pairs centred at +/- omega_d. Frequencies are stored in radians per second;
the JSON kernel file uses Hz.
"""

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import toeplitz

from .errors import ParameterError

TWO_PI = 2.0 * math.pi


def _canonical_components(weights, freqs):
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if weights.shape != freqs.shape or weights.ndim != 1 or weights.size == 0:
        raise ParameterError("weights and freqs must be non-empty 1-D arrays of equal length")
    if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(freqs))):
        raise ParameterError("component weights and frequencies must be finite")
    if np.any(weights < 0):
        raise ParameterError("component weights must be >= 0")
    if np.any(freqs < 0):
        raise ParameterError("component frequencies must be >= 0")
    if not np.any(weights > 0):
        raise ParameterError("at least one component weight must be > 0")

    order = np.argsort(freqs, kind="stable")
    freqs = freqs[order]
    weights = weights[order]
    # merge exact duplicates by summing their weights
    uniq, start = np.unique(freqs, return_index=True)
    if uniq.size != freqs.size:
        weights = np.add.reduceat(weights, start)
        freqs = uniq
    return tuple(float(w) for w in weights), tuple(float(f) for f in freqs)


@dataclass(frozen=True)
class MsmKernelParams:
    """Hyperparameters of one MSM kernel.

    Parameters
    ----------
    variance : float
        Amplitude scale (signal units squared), > 0.
    lengthscale : float
        Decay time of the exponential envelope in seconds, > 0.
    weights : sequence of float
        Component weights (>= 0, at least one > 0).
    freqs : sequence of float
        Component angular frequencies in rad/s (>= 0).

    Components are canonicalized on construction: sorted by frequency with
    duplicate frequencies merged.
    """

    variance: float
    lengthscale: float
    weights: tuple = field(default=(1.0,))
    freqs: tuple = field(default=(0.0,))

    def __post_init__(self):
        variance = float(self.variance)
        lengthscale = float(self.lengthscale)
        if not (np.isfinite(variance) and variance > 0):
            raise ParameterError("variance must be finite and > 0, got {!r}".format(self.variance))
        if not (np.isfinite(lengthscale) and lengthscale > 0):
            raise ParameterError(
                "lengthscale must be finite and > 0, got {!r}".format(self.lengthscale))
        weights, freqs = _canonical_components(self.weights, self.freqs)
        object.__setattr__(self, "variance", variance)
        object.__setattr__(self, "lengthscale", lengthscale)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "freqs", freqs)

    @classmethod
    def from_hz(cls, variance, lengthscale, weights, freqs_hz):
        return cls(variance, lengthscale, weights, TWO_PI * np.asarray(freqs_hz, dtype=float))

    @property
    def D(self):
        return len(self.weights)

    @property
    def weights_array(self):
        return np.asarray(self.weights)

    @property
    def freqs_array(self):
        return np.asarray(self.freqs)

    @property
    def freqs_hz(self):
        return self.freqs_array / TWO_PI

    @property
    def k0(self):
        """Kernel value at zero lag."""
        return self.variance * float(np.sum(self.weights_array))

    def with_variance(self, variance):
        return replace(self, variance=variance)

    def __call__(self, tau):
        return msm_eval(self, tau)


@dataclass(frozen=True)
class SumKernel:
    """Additive kernel ``k_f = sum_j k_j`` over an ordered list of MSM parts."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if len(parts) < 1:
            raise ParameterError("SumKernel needs at least one part")
        for p in parts:
            if not isinstance(p, MsmKernelParams):
                raise ParameterError("SumKernel parts must be MsmKernelParams")
        object.__setattr__(self, "parts", parts)

    @property
    def J(self):
        return len(self.parts)

    @property
    def k0(self):
        return sum(p.k0 for p in self.parts)

    def __call__(self, tau):
        return msm_eval(self, tau)


def _parts(kernel):
    if isinstance(kernel, SumKernel):
        return kernel.parts
    if isinstance(kernel, MsmKernelParams):
        return (kernel,)
    raise ParameterError("expected MsmKernelParams or SumKernel, got {}".format(type(kernel)))


def _msm_single(p, tau):
    acc = np.zeros_like(tau)
    for w, om in zip(p.weights, p.freqs):
        if om == 0.0:
            acc += w
        else:
            acc += w * np.cos(om * tau)
    return p.variance * np.exp(-tau / p.lengthscale) * acc


def msm_eval(kernel, tau):
    """Evaluate an MSM (or sum of MSM) kernel at non-negative lags ``tau``."""
    scalar = np.ndim(tau) == 0
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ParameterError("lags must be >= 0; pass |t - t'|")
    out = sum(_msm_single(p, tau) for p in _parts(kernel))
    return float(out) if scalar else out


def _uniform_step(t):
    if t.size < 2:
        return None
    d = np.diff(t)
    step = d[0]
    if step <= 0:
        return None
    if np.all(np.abs(d - step) <= 1e-9 * abs(step)):
        return step
    return None


def gram(kernel, rows, cols=None):
    """Gram matrix ``K[l, l'] = k(|rows[l] - cols[l']|)``.

    With ``cols`` omitted (or identical to ``rows``) the matrix is exactly
    symmetric; on a uniform grid it is built as a Toeplitz matrix from one
    row of lags.
    """
    rows = np.atleast_1d(np.asarray(rows, dtype=float))
    square = cols is None or cols is rows
    if not square:
        cols = np.atleast_1d(np.asarray(cols, dtype=float))
        square = cols.shape == rows.shape and np.array_equal(cols, rows)
    if not np.all(np.isfinite(rows)) or (not square and not np.all(np.isfinite(cols))):
        raise ParameterError("time vectors must be finite")

    if square:
        step = _uniform_step(rows)
        if step is not None:
            lags = np.arange(rows.size) * step
            return toeplitz(msm_eval(kernel, lags))
        tau = np.abs(rows[:, None] - rows[None, :])
        K = msm_eval(kernel, tau)
        # |a-b| == |b-a| in IEEE arithmetic, so K is already exactly symmetric
        return K
    tau = np.abs(rows[:, None] - cols[None, :])
    return msm_eval(kernel, tau)


def _lorentz(x, lengthscale):
    rate = 1.0 / lengthscale
    return (rate / math.pi) / (rate * rate + x * x)


def spectral_density(kernel, freqs):
    """Closed-form spectral density at angular frequencies ``freqs`` (rad/s).

    Uses the convention ``k(tau) = int S(w) exp(i w tau) dw`` over the real
    line, so that the integral of ``S`` equals ``k(0)``.
    """
    freqs = np.asarray(freqs, dtype=float)
    out = np.zeros_like(freqs)
    for p in _parts(kernel):
        for w, om in zip(p.weights, p.freqs):
            out += p.variance * w * 0.5 * (
                _lorentz(freqs - om, p.lengthscale) + _lorentz(freqs + om, p.lengthscale))
    return out


def kernel_curves(params, max_lag, sample_rate, n_freq=2048):
    """Kernel over lags and log spectral density over [0, Nyquist].

    Returns a dict with ``lag_s``, ``k``, ``freq_hz``, ``log_density``. This
    is the data behind a kernel / log-spectrum plot.
    """
    lags = np.arange(int(math.floor(max_lag * sample_rate)) + 1) / sample_rate
    f_hz = np.linspace(0.0, sample_rate / 2.0, n_freq)
    dens = spectral_density(params, TWO_PI * f_hz)
    return {"lag_s": lags, "k": msm_eval(params, lags),
            "freq_hz": f_hz, "log_density": np.log(dens)}


def write_kernel_curves(path, params, max_lag, sample_rate, n_freq=2048):
    """Write :func:`kernel_curves` as a two-block CSV (``kind,x,y``)."""
    curves = kernel_curves(params, max_lag, sample_rate, n_freq)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "x", "y"])
        for x, y in zip(curves["lag_s"], curves["k"]):
            writer.writerow(["kernel", repr(float(x)), repr(float(y))])
        for x, y in zip(curves["freq_hz"], curves["log_density"]):
            writer.writerow(["log_density", repr(float(x)), repr(float(y))])


# ---------------------------------------------------------------------------
# kernel JSON files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelFile:
    """Contents of a kernel parameter file."""

    name: str
    sample_rate_hz: float
    params: MsmKernelParams
    extra: dict = field(default_factory=dict, compare=False)


def kernel_to_dict(params, name="", sample_rate_hz=16000.0, extra=None):
    doc = {
        "name": name,
        "sample_rate_hz": float(sample_rate_hz),
        "variance": params.variance,
        "lengthscale_s": params.lengthscale,
        # angular_frequency is redundant with freq_hz but keeps the file
        # an exact round trip of the in-memory rad/s values
        "components": [
            {"weight": w, "freq_hz": om / TWO_PI, "angular_frequency": om}
            for w, om in zip(params.weights, params.freqs)
        ],
    }
    if extra:
        doc.update(extra)
    return doc


def kernel_from_dict(doc):
    try:
        comps = doc["components"]
        weights = [float(c["weight"]) for c in comps]
        freqs = [float(c["angular_frequency"]) if "angular_frequency" in c
                 else TWO_PI * float(c["freq_hz"]) for c in comps]
        params = MsmKernelParams(float(doc["variance"]), float(doc["lengthscale_s"]),
                                 weights, freqs)
        known = {"name", "sample_rate_hz", "variance", "lengthscale_s", "components"}
        extra = {k: v for k, v in doc.items() if k not in known}
        return KernelFile(str(doc.get("name", "")), float(doc["sample_rate_hz"]), params, extra)
    except (KeyError, TypeError) as exc:
        raise ParameterError("malformed kernel document: {}".format(exc)) from exc


def save_kernel(path, params, name="", sample_rate_hz=16000.0, extra=None):
    with open(path, "w") as fh:
        json.dump(kernel_to_dict(params, name, sample_rate_hz, extra), fh, indent=2)
        fh.write("\n")


def load_kernel(path):
    with open(path) as fh:
        return kernel_from_dict(json.load(fh))
