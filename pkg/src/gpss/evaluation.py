"""Separation metrics and synthetic benchmark mixtures.

Metrics follow the projection form of BSS-eval: each estimate is split into
a target part (projection onto its own reference), interference (the rest of
its projection onto all references) and artifacts (the remainder). No
distortion filters are allowed.
"""

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernel as kern
from .errors import DegenerateReferenceError, InputSizeError, ParameterError
from .gpcore import GpMixturePrior, sample_prior_factors, sample_with_factors

logger = logging.getLogger(__name__)

DB_CAP = 200.0
NOISE_FLOOR = 1e-12

NOTE_HZ = {"C4": 261.6256, "E4": 329.6276, "G4": 391.9954}
NOTE_PATTERN = (("C4",), ("E4",), ("G4",), ("C4", "E4"), ("C4", "G4"), ("E4", "G4"),
                ("C4", "E4", "G4"))


@dataclass
class BssMetrics:
    sdr: float
    sir: float
    sar: float
    rmse: float


@dataclass
class Decomposition:
    target: np.ndarray
    interf: np.ndarray
    artif: np.ndarray


def _ratio_db(num, den):
    if den <= num * 10 ** (-DB_CAP / 10):
        return DB_CAP
    if num <= den * 10 ** (-DB_CAP / 10):
        return -DB_CAP
    return 10.0 * math.log10(num / den)


def rmse(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InputSizeError("rmse needs equal shapes, got {} and {}".format(a.shape, b.shape))
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _as_sources(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise InputSizeError("{} must be a (J, n) array".format(name))
    return x


def decompose(true_sources, estimate, j):
    """Split ``estimate`` into target, interference and artifact components."""
    S = _as_sources(true_sources, "true_sources")
    e = np.asarray(estimate, dtype=float)
    norms = np.einsum("ij,ij->i", S, S)
    if np.any(norms == 0):
        raise DegenerateReferenceError("reference sources must have non-zero energy")
    s = S[j]
    target = (s @ e) / norms[j] * s
    coef, *_ = np.linalg.lstsq(S.T, e, rcond=None)
    proj = S.T @ coef
    return Decomposition(target=target, interf=proj - target, artif=e - proj)


def bss_eval(true_sources, estimates):
    """SDR, SIR, SAR (dB) and RMSE for each estimate against its reference.

    Ratios are capped at +/-200 dB so perfect estimates stay finite.
    """
    S = _as_sources(true_sources, "true_sources")
    E = _as_sources(estimates, "estimates")
    if S.shape != E.shape:
        raise InputSizeError("true_sources {} and estimates {} differ in shape".format(
            S.shape, E.shape))
    if np.any(np.einsum("ij,ij->i", S, S) == 0):
        raise DegenerateReferenceError("reference sources must have non-zero energy")
    if np.linalg.matrix_rank(S) < S.shape[0]:
        warnings.warn("reference sources are linearly dependent")
    out = []
    for j in range(S.shape[0]):
        d = decompose(S, E[j], j)
        t2 = d.target @ d.target
        i2 = d.interf @ d.interf
        a2 = d.artif @ d.artif
        ia = d.interf + d.artif
        ti = d.target + d.interf
        out.append(BssMetrics(sdr=_ratio_db(t2, ia @ ia), sir=_ratio_db(t2, i2),
                              sar=_ratio_db(ti @ ti, a2), rmse=rmse(E[j], S[j])))
    return out


METRIC_FIELDS = ("source_id", "sdr_db", "sir_db", "sar_db", "rmse")


def metrics_rows(metrics):
    return [{"source_id": j, "sdr_db": m.sdr, "sir_db": m.sir, "sar_db": m.sar, "rmse": m.rmse}
            for j, m in enumerate(metrics)]


def write_metrics_csv(path, metrics):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        writer.writeheader()
        for row in metrics_rows(metrics):
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_metrics_json(path, metrics):
    with open(path, "w") as fh:
        json.dump(metrics_rows(metrics), fh, indent=2)
        fh.write("\n")


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [BssMetrics(float(r["sdr_db"]), float(r["sir_db"]), float(r["sar_db"]),
                       float(r["rmse"])) for r in rows]


# ---------------------------------------------------------------------------
# synthetic benchmarks
# ---------------------------------------------------------------------------

def harmonic_kernel(f0_hz, n_harmonics=8, lengthscale=0.1, variance=1.0, decay=0.35,
                    inharmonicity=0.0):
    """MSM kernel with partials at ``k * f0`` and geometric weights ``decay**(k-1)``.

    Weights are normalized to sum to one. ``inharmonicity`` stretches the
    partials as ``k * f0 * sqrt(1 + B k^2)``.
    """
    k = np.arange(1, n_harmonics + 1, dtype=float)
    freqs = k * f0_hz * np.sqrt(1.0 + inharmonicity * k * k)
    w = decay ** (k - 1)
    return kern.MsmKernelParams.from_hz(variance, lengthscale, w / w.sum(), freqs)


@dataclass
class BenchmarkSpec:
    """Recipe for a deterministic synthetic mixture.

    ``pattern`` switches on note-sequence mode: a list of segments, each the
    tuple of source indices (or names) active in it.
    """

    kernels: list
    duration: float
    sample_rate: float = 16000.0
    noise_variance: float = 1e-4
    seed: int = 0
    names: list = None
    segment_seconds: float = 0.25
    crossfade_seconds: float = 0.02
    pattern: list = None
    ramp_seconds: float = 0.01

    def __post_init__(self):
        self.kernels = list(self.kernels)
        if not self.kernels:
            raise ParameterError("benchmark needs at least one source kernel")
        if self.names is None:
            self.names = ["source_{}".format(j) for j in range(len(self.kernels))]
        if len(self.names) != len(self.kernels):
            raise ParameterError("names and kernels differ in length")
        if not (self.duration > 0 and self.sample_rate > 0):
            raise ParameterError("duration and sample_rate must be > 0")
        if self.duration * self.sample_rate > 1e6:
            raise ParameterError("benchmark limited to 10^6 samples")
        if self.noise_variance < 0:
            raise ParameterError("noise_variance must be >= 0")
        if self.noise_variance < NOISE_FLOOR:
            warnings.warn("noise_variance {} raised to floor {}".format(
                self.noise_variance, NOISE_FLOOR))
            self.noise_variance = NOISE_FLOOR
        if not (0 <= self.crossfade_seconds < self.segment_seconds):
            raise ParameterError("need 0 <= crossfade_seconds < segment_seconds")
        if self.pattern is not None:
            self.pattern = [tuple(self._index(a) for a in seg) for seg in self.pattern]

    def _index(self, a):
        if isinstance(a, str):
            if a not in self.names:
                raise ParameterError("unknown source name {!r} in pattern".format(a))
            return self.names.index(a)
        a = int(a)
        if not 0 <= a < len(self.kernels):
            raise ParameterError("pattern index {} out of range".format(a))
        return a

    @property
    def J(self):
        return len(self.kernels)

    @property
    def n(self):
        return int(round(self.duration * self.sample_rate))

    def to_dict(self):
        d = asdict(self)
        d["kernels"] = [kern.kernel_to_dict(k, name, self.sample_rate)
                        for k, name in zip(self.kernels, self.names)]
        if self.pattern is not None:
            d["pattern"] = [list(seg) for seg in self.pattern]
        return d

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ParameterError("unknown benchmark keys: {}".format(sorted(unknown)))
        rate = float(doc.get("sample_rate", 16000.0))
        kernels, names = [], []
        for entry in doc.get("kernels", []):
            if isinstance(entry, str):
                if entry not in NOTE_HZ:
                    raise ParameterError("unknown note {!r}".format(entry))
                kernels.append(harmonic_kernel(NOTE_HZ[entry]))
                names.append(entry)
            else:
                kf = kern.kernel_from_dict(entry)
                if kf.sample_rate_hz != rate:
                    raise ParameterError("kernel sample rate differs from benchmark rate")
                kernels.append(kf.params)
                names.append(kf.name or "source_{}".format(len(names)))
        doc["kernels"] = kernels
        if "names" not in doc or doc["names"] is None:
            doc["names"] = names
        return cls(**doc)


@dataclass
class Benchmark:
    true_sources: np.ndarray
    mixture: np.ndarray
    noise: np.ndarray
    masks: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.arange(self.mixture.size) / self.metadata["sample_rate"]


def note_benchmark_spec(duration=3.5, seed=0, n_harmonics=8, decay=0.35, noise_variance=1e-4,
                        **kwargs):
    """Three-note (C4, E4, G4) sequence: each note alone, every pair, then all three."""
    names = list(NOTE_HZ)
    kernels = [harmonic_kernel(NOTE_HZ[nm], n_harmonics, decay=decay) for nm in names]
    return BenchmarkSpec(kernels=kernels, names=names, duration=duration, seed=seed,
                         noise_variance=noise_variance, pattern=[list(p) for p in NOTE_PATTERN],
                         **kwargs)


def _segment_masks(spec, n):
    fs = spec.sample_rate
    n_seg = len(spec.pattern)
    edges = np.round(np.linspace(0, n, n_seg + 1)).astype(int)
    masks = np.zeros((spec.J, n))
    for s, active in enumerate(spec.pattern):
        for j in active:
            masks[j, edges[s]:edges[s + 1]] = 1.0
    ramp = int(round(spec.ramp_seconds * fs))
    if ramp > 1:
        # raised-cosine smoothing of the 0/1 gates
        win = np.hanning(2 * ramp + 1)
        win /= win.sum()
        padded = np.pad(masks, ((0, 0), (ramp, ramp)), mode="edge")
        masks = np.array([np.convolve(m, win, mode="valid") for m in padded])
    return masks, edges


def _sample_sources(spec, n, seed_seq):
    """Crossfaded segment-wise prior draws of every source, shape ``(J, n)``."""
    fs = spec.sample_rate
    seg = max(2, int(round(spec.segment_seconds * fs)))
    fade = int(round(spec.crossfade_seconds * fs))
    step = seg - fade
    n_segments = 1 if n <= seg else int(math.ceil((n - seg) / step)) + 1

    prior = GpMixturePrior(spec.kernels, max(spec.noise_variance, NOISE_FLOOR))
    factors = sample_prior_factors(prior, np.arange(seg) / fs)
    seeds = seed_seq.spawn(n_segments)

    total = (n_segments - 1) * step + seg
    sources = np.zeros((spec.J, total))
    theta = (np.arange(fade) + 0.5) / fade * (math.pi / 2) if fade else np.zeros(0)
    fade_out, fade_in = np.cos(theta), np.sin(theta)
    for k in range(n_segments):
        draw = sample_with_factors(factors, np.random.default_rng(seeds[k]))
        start = k * step
        if k == 0 or fade == 0:
            sources[:, start:start + seg] = draw
        else:
            sources[:, start:start + fade] = (sources[:, start:start + fade] * fade_out
                                              + draw[:, :fade] * fade_in)
            sources[:, start + fade:start + seg] = draw[:, fade:]
    info = {"n_segments": n_segments, "segment_samples": seg, "crossfade_samples": fade,
            "crossfade": "equal-power cos/sin"}
    return sources[:, :n], info


def make_benchmark(spec):
    """Sample a synthetic mixture from GP priors, deterministically per seed.

    Each source is drawn on independent segments of ``segment_seconds`` with
    the :func:`gpcore.sample_prior` machinery and joined by equal-power
    (cos/sin) crossfades of ``crossfade_seconds``. In note-sequence mode the
    sources are gated by per-segment activity masks; the mixture is the sum
    of the masked sources plus white noise.
    """
    if isinstance(spec, dict):
        spec = BenchmarkSpec.from_dict(spec)
    n = spec.n
    src_seq, noise_seq = np.random.SeedSequence([spec.seed, 0]).spawn(2)
    sources, info = _sample_sources(spec, n, src_seq)

    if spec.pattern is not None:
        masks, edges = _segment_masks(spec, n)
    else:
        masks, edges = np.ones((spec.J, n)), np.array([0, n])
    true_sources = masks * sources
    rng = np.random.default_rng(noise_seq)
    noise = math.sqrt(spec.noise_variance) * rng.standard_normal(n)
    mixture = true_sources.sum(axis=0) + noise

    meta = spec.to_dict()
    meta.update(info)
    meta.update({"n": n, "pattern_edges": edges.tolist()})
    return Benchmark(true_sources=true_sources, mixture=mixture, noise=noise, masks=masks,
                     metadata=meta)


def training_clips(spec, seconds=1.0):
    """Isolated, noise-free recordings of every source for kernel fitting.

    Drawn from the same kernels as the benchmark but from a seed stream
    disjoint from the mixture's.
    """
    if isinstance(spec, dict):
        spec = BenchmarkSpec.from_dict(spec)
    n = int(round(seconds * spec.sample_rate))
    sources, _ = _sample_sources(spec, n, np.random.SeedSequence([spec.seed, 1]))
    return sources
