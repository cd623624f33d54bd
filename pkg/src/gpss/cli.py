"""Command-line interface.

    gpss fit             fit an MSM kernel to an isolated-source WAV
    gpss separate        separate a mixture WAV given one kernel file per source
    gpss eval            BSS metrics of estimated against true source WAVs
    gpss make-benchmark  write a synthetic benchmark (sources, mixture, training clips)
    gpss bench-d         sweep the number of kernel components on a benchmark

Every subcommand accepts ``--config FILE`` (JSON); its keys become defaults
for the matching flags, and flags given on the command line win. The
``GPSS_SEED`` environment variable sets the default seed.
"""

import argparse
import csv
import glob
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import evaluation, experiments, framing, kernelfit
from .audio import read_wav, write_wav
from .errors import DegenerateSignalError, FitFailure, GpssError, ParameterError
from .gpcore import GpMixturePrior
from .kernel import load_kernel, save_kernel, write_kernel_curves

logger = logging.getLogger("gpss")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FIT_FAILURE = 2


def default_seed():
    return int(os.environ.get("GPSS_SEED", "0"))


@dataclass
class RunConfig:
    """Settings shared by the subcommands; mirrors the long flag names."""

    input: str = None
    out: str = None
    D: int = 15
    max_lag: float = kernelfit.DEFAULT_MAX_LAG
    window: float = None
    seed: int = None
    name: str = None
    curves: str = None
    mixture: str = None
    kernels: list = None
    frame_seconds: float = 0.125
    overlap: float = 0.5
    full: bool = False
    m_max: int = None
    free: list = None
    noise_variance: float = None
    strict: bool = False
    jobs: int = None
    true: str = None
    est: str = None
    spec: str = None
    sweep: list = None
    train_seconds: float = 1.0

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ParameterError("unknown config keys: {}".format(", ".join(sorted(unknown))))
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.D is not None and int(self.D) < 1:
            raise ParameterError("D must be >= 1")
        if self.overlap is not None and not 0 <= self.overlap < 1:
            raise ParameterError("overlap must lie in [0, 1)")
        if self.frame_seconds is not None and self.frame_seconds <= 0:
            raise ParameterError("frame_seconds must be > 0")
        if self.max_lag is not None and self.max_lag < 0:
            raise ParameterError("max_lag must be >= 0")
        if self.free is not None:
            bad = set(self.free) - {"sigma2", "noise"}
            if bad or "sigma2" not in self.free:
                raise ParameterError("free must contain 'sigma2' and optionally 'noise'")
        if self.sweep is not None and any(int(d) < 1 for d in self.sweep):
            raise ParameterError("sweep values must be >= 1")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser(defaults=None):
    d = RunConfig() if defaults is None else defaults
    seed = d.seed if d.seed is not None else default_seed()
    parser = argparse.ArgumentParser(
        prog="gpss", description="Gaussian-process source separation of mono audio.")
    parser.add_argument("--config", help="JSON file with default values for the flags")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit an MSM kernel to an isolated-source recording")
    p.add_argument("--input", default=d.input, help="mono WAV of one isolated source")
    p.add_argument("--out", default=d.out, help="kernel JSON to write")
    p.add_argument("--D", type=int, default=d.D, help="number of kernel components")
    p.add_argument("--max-lag", type=float, default=d.max_lag,
                   help="largest autocovariance lag in seconds")
    p.add_argument("--window", type=float, default=d.window,
                   help="averaging window in seconds (default: duration - max lag)")
    p.add_argument("--seed", type=int, default=seed, help="seed for restarts and fallbacks")
    p.add_argument("--name", default=d.name, help="source name stored in the kernel file")
    p.add_argument("--curves", default=d.curves,
                   help="also write kernel and log spectral density curves as CSV")

    p = sub.add_parser("separate", help="separate a mixture into one WAV per kernel")
    p.add_argument("--mixture", default=d.mixture, help="mono mixture WAV")
    p.add_argument("--kernels", nargs="+", default=d.kernels, help="kernel JSON per source")
    p.add_argument("--out", default=d.out, help="output directory")
    p.add_argument("--frame-seconds", type=float, default=d.frame_seconds)
    p.add_argument("--overlap", type=float, default=d.overlap)
    p.add_argument("--full", action="store_true", default=d.full,
                   help="learn variances with the exact O(n^3) likelihood")
    p.add_argument("--m-max", type=int, default=d.m_max,
                   help="cap on inducing points per frame (default: frame length / 4)")
    p.add_argument("--free", nargs="+", default=d.free, choices=["sigma2", "noise"],
                   help="parameters learned per frame (default: sigma2)")
    p.add_argument("--noise-variance", type=float, default=d.noise_variance,
                   help="fixed noise variance (default: 1e-3 of each frame's variance)")
    p.add_argument("--strict", action="store_true", default=d.strict,
                   help="abort on the first failing frame")
    p.add_argument("--jobs", type=int, default=d.jobs,
                   help="frame worker threads (default: number of CPUs)")

    p = sub.add_parser("eval", help="score estimated against true source WAVs")
    p.add_argument("--true", default=d.true, help="directory with source_*.wav references")
    p.add_argument("--est", default=d.est, help="directory with source_*.wav estimates")
    p.add_argument("--out", default=d.out, help="metrics CSV; a .json twin is written too")

    p = sub.add_parser("make-benchmark", help="write a synthetic benchmark directory")
    p.add_argument("--spec", default=d.spec,
                   help="benchmark spec JSON (default: C4/E4/G4 note sequence)")
    p.add_argument("--out", default=d.out, help="output directory")
    p.add_argument("--train-seconds", type=float, default=d.train_seconds,
                   help="length of each isolated training clip")

    p = sub.add_parser("bench-d", help="sweep the number of kernel components")
    p.add_argument("--sweep", type=_int_list, default=d.sweep or [1, 2, 3, 4, 8, 15],
                   help="comma-separated component counts")
    p.add_argument("--spec", default=d.spec,
                   help="benchmark spec JSON (default: C4/E4/G4 note sequence)")
    p.add_argument("--out", default=d.out, help="output directory")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--max-lag", type=float, default=d.max_lag)
    p.add_argument("--train-seconds", type=float, default=d.train_seconds)
    p.add_argument("--frame-seconds", type=float, default=d.frame_seconds)
    p.add_argument("--overlap", type=float, default=d.overlap)
    p.add_argument("--m-max", type=int, default=d.m_max)
    p.add_argument("--jobs", type=int, default=d.jobs)
    return parser


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, []):
            raise ParameterError("--{} is required".format(n.replace("_", "-")))


def _jobs(args):
    return args.jobs if args.jobs else (os.cpu_count() or 1)


def cmd_fit(args):
    _need(args, "input", "out")
    x, rate = read_wav(args.input)
    clip = kernelfit.TrainingClip(x, rate)
    target = kernelfit.estimate_autocovariance(clip, args.max_lag, args.window)
    try:
        rep = kernelfit.fit_msm(target, args.D, seed=args.seed)
    except FitFailure as exc:
        print("fit failed: {}".format(exc), file=sys.stderr)
        if exc.best is not None:
            save_kernel(args.out, exc.best, args.name or "", rate, {"fit_failed": True})
        return EXIT_FIT_FAILURE
    name = args.name or os.path.splitext(os.path.basename(args.input))[0]
    save_kernel(args.out, rep.params, name, rate,
                {"final_mse": rep.final_mse, "iterations": rep.iterations,
                 "converged": rep.converged})
    if args.curves:
        write_kernel_curves(args.curves, rep.params, max(args.max_lag, 0.03), rate)
    print("{}: D={} mse={:.3e} iterations={}".format(name, rep.params.D, rep.final_mse,
                                                     rep.iterations))
    return EXIT_OK


def _source_paths(directory):
    paths = sorted(glob.glob(os.path.join(directory, "source_*.wav")))
    if not paths:
        raise ParameterError("no source_*.wav files in {}".format(directory))
    return paths


def cmd_separate(args):
    _need(args, "mixture", "kernels", "out")
    y, rate = read_wav(args.mixture)
    files = [load_kernel(p) for p in args.kernels]
    for path, kf in zip(args.kernels, files):
        if kf.sample_rate_hz != rate:
            raise ParameterError("{} was fitted at {} Hz but the mixture is {} Hz".format(
                path, kf.sample_rate_hz, rate))
    free = args.free or ["sigma2"]
    prior = GpMixturePrior([kf.params for kf in files], 1e-3)
    plan = framing.make_plan(y.size, rate, args.frame_seconds, args.overlap)
    options = framing.SeparateOptions(m_max=args.m_max, full=args.full,
                                      free_noise="noise" in free,
                                      noise_variance=args.noise_variance, strict=args.strict,
                                      jobs=_jobs(args))
    res = framing.separate(y, plan, prior, options)
    os.makedirs(args.out, exist_ok=True)
    for j, (src, kf) in enumerate(zip(res.sources, files)):
        write_wav(os.path.join(args.out, "source_{}.wav".format(j)), src, rate)
    framing.write_run_log(os.path.join(args.out, "run_log.jsonl"), res)
    summary = {"mode": "full" if args.full else "sparse", "frames": plan.W,
               "frame_length": plan.frame_length, "hop": plan.hop,
               "total_optimization_minutes": res.learn_seconds / 60.0,
               "failed_frames": sum(1 for r in res.per_frame if r.error),
               "sources": [kf.name for kf in files]}
    with open(os.path.join(args.out, "timing.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print("separated {} sources over {} frames; optimization {:.3f} min".format(
        len(files), plan.W, summary["total_optimization_minutes"]))
    return EXIT_OK


def cmd_eval(args):
    _need(args, "true", "est", "out")
    true_paths, est_paths = _source_paths(args.true), _source_paths(args.est)
    if len(true_paths) != len(est_paths):
        raise ParameterError("{} true sources but {} estimates".format(
            len(true_paths), len(est_paths)))
    true = [read_wav(p)[0] for p in true_paths]
    est = [read_wav(p)[0] for p in est_paths]
    if len({x.size for x in true + est}) != 1:
        raise ParameterError("all source files must have the same length")
    metrics = evaluation.bss_eval(np.array(true), np.array(est))
    evaluation.write_metrics_csv(args.out, metrics)
    evaluation.write_metrics_json(os.path.splitext(args.out)[0] + ".json", metrics)
    for j, m in enumerate(metrics):
        print("source {}: SDR {:.2f} SIR {:.2f} SAR {:.2f} RMSE {:.4g}".format(
            j, m.sdr, m.sir, m.sar, m.rmse))
    return EXIT_OK


def _load_spec(path):
    if path is None:
        return evaluation.note_benchmark_spec()
    with open(path) as fh:
        return evaluation.BenchmarkSpec.from_dict(json.load(fh))


def write_benchmark(out, bench, clips=None):
    os.makedirs(out, exist_ok=True)
    rate = bench.metadata["sample_rate"]
    for j, src in enumerate(bench.true_sources):
        write_wav(os.path.join(out, "source_{}.wav".format(j)), src, rate)
    write_wav(os.path.join(out, "mixture.wav"), bench.mixture, rate)
    if clips is not None:
        for j, c in enumerate(clips):
            write_wav(os.path.join(out, "train_{}.wav".format(j)), c, rate)
    with open(os.path.join(out, "metadata.json"), "w") as fh:
        json.dump(bench.metadata, fh, indent=2)
        fh.write("\n")


def cmd_make_benchmark(args):
    _need(args, "out")
    spec = _load_spec(args.spec)
    bench = evaluation.make_benchmark(spec)
    clips = evaluation.training_clips(spec, args.train_seconds)
    write_benchmark(args.out, bench, clips)
    print("wrote {} sources, mixture and training clips to {}".format(spec.J, args.out))
    return EXIT_OK


SWEEP_FIELDS = ("D", "source_id", "sdr_db", "sir_db", "sar_db", "rmse", "fit_mse",
                "learn_seconds")


def cmd_bench_d(args):
    _need(args, "out")
    spec = _load_spec(args.spec)
    if args.spec is None:
        spec.seed = args.seed
    bench = evaluation.make_benchmark(spec)
    clips = evaluation.training_clips(spec, args.train_seconds)
    options = framing.SeparateOptions(m_max=args.m_max, jobs=_jobs(args))
    rows = experiments.d_sweep(bench, clips, args.sweep, seed=args.seed, max_lag=args.max_lag,
                               frame_seconds=args.frame_seconds, overlap=args.overlap,
                               options=options)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_FIELDS)
        for row in rows:
            for j, m in enumerate(row.metrics):
                writer.writerow([row.D, j, m.sdr, m.sir, m.sar, m.rmse, row.fit_mse[j],
                                 row.learn_seconds])
    with open(os.path.join(args.out, "sweep_median.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["D", "sdr_db", "sir_db", "sar_db", "rmse"])
        for row in rows:
            md = row.medians()
            writer.writerow([row.D, md["sdr"], md["sir"], md["sar"], md["rmse"]])
            print("D={:>2}: SDR {:.2f} SIR {:.2f} SAR {:.2f} RMSE {:.4g}".format(
                row.D, md["sdr"], md["sir"], md["sar"], md["rmse"]))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "separate": cmd_separate, "eval": cmd_eval,
            "make-benchmark": cmd_make_benchmark, "bench-d": cmd_bench_d}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        defaults = RunConfig.load(known.config) if known.config else None
    except (OSError, ValueError) as exc:
        print("error: bad config: {}".format(exc), file=sys.stderr)
        return EXIT_ERROR

    args = build_parser(defaults).parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DegenerateSignalError as exc:
        print("error: degenerate signal: {}".format(exc), file=sys.stderr)
        return EXIT_ERROR
    except (GpssError, OSError, ValueError) as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
