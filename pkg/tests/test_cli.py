import csv
import json

import numpy as np
import pytest

from gpss import cli
from gpss.audio import read_wav, write_wav
from gpss.errors import ParameterError
from gpss.evaluation import BenchmarkSpec, make_benchmark
from gpss.gpcore import GpMixturePrior, sample_prior
from gpss.kernel import MsmKernelParams, load_kernel, save_kernel

FS = 8000


def tone_clip(path, seconds=0.3, rate=FS, seed=0):
    k = MsmKernelParams.from_hz(1.0, 0.03, [0.6, 0.4], [300.0, 900.0])
    t = np.arange(int(seconds * rate)) / rate
    x = sample_prior(GpMixturePrior([k], 1e-6), t, seed)[1]
    write_wav(path, 0.3 * x / np.abs(x).max(), rate)
    return k


def kernel_file(path, hz, rate=FS, name="src"):
    k = MsmKernelParams.from_hz(1.0, 0.02, [1.0], [hz])
    save_kernel(path, k, name, rate)
    return k


def write_sources(directory, rows, rate=FS):
    directory.mkdir(exist_ok=True)
    for j, x in enumerate(rows):
        write_wav(directory / "source_{}.wav".format(j), x, rate)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestAudio:
    def test_float_round_trip(self, tmp_path):
        x = np.random.default_rng(0).uniform(-1, 1, 500)
        write_wav(tmp_path / "a.wav", x, 16000)
        y, rate = read_wav(tmp_path / "a.wav")
        assert rate == 16000.0
        np.testing.assert_allclose(y, x.astype(np.float32))

    def test_pcm16_scaled(self, tmp_path):
        from scipy.io import wavfile
        wavfile.write(tmp_path / "p.wav", 8000, np.array([0, 16384, -32768], dtype=np.int16))
        y, _ = read_wav(tmp_path / "p.wav")
        np.testing.assert_array_equal(y, [0.0, 0.5, -1.0])

    def test_stereo_rejected(self, tmp_path):
        from scipy.io import wavfile
        wavfile.write(tmp_path / "s.wav", 8000, np.zeros((10, 2), dtype=np.float32))
        with pytest.raises(ParameterError):
            read_wav(tmp_path / "s.wav")

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_wav(tmp_path / "nope.wav")


class TestFit:
    def test_fifteen_components_and_repeatable(self, tmp_path):
        tone_clip(tmp_path / "clip.wav")
        args = ["fit", "--input", str(tmp_path / "clip.wav"), "--D", "15", "--seed", "3"]
        assert cli.main(args + ["--out", str(tmp_path / "a.json")]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "b.json")]) == 0
        kf = load_kernel(tmp_path / "a.json")
        assert kf.params.D == 15
        assert kf.name == "clip"
        assert kf.sample_rate_hz == FS
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        doc = json.loads((tmp_path / "a.json").read_text())
        assert {"final_mse", "iterations"} <= set(doc)

    def test_curves(self, tmp_path):
        tone_clip(tmp_path / "clip.wav")
        assert cli.main(["fit", "--input", str(tmp_path / "clip.wav"), "--D", "2",
                         "--out", str(tmp_path / "k.json"),
                         "--curves", str(tmp_path / "c.csv")]) == 0
        assert (tmp_path / "c.csv").stat().st_size > 0

    def test_silent_clip(self, tmp_path, capsys):
        write_wav(tmp_path / "zero.wav", np.zeros(2000), FS)
        code = cli.main(["fit", "--input", str(tmp_path / "zero.wav"),
                         "--out", str(tmp_path / "k.json")])
        assert code == 1
        assert "degenerate" in capsys.readouterr().err
        assert not (tmp_path / "k.json").exists()

    def test_unreadable(self, tmp_path, capsys):
        (tmp_path / "bad.wav").write_bytes(b"not a wav")
        assert cli.main(["fit", "--input", str(tmp_path / "bad.wav"),
                         "--out", str(tmp_path / "k.json")]) == 1
        assert cli.main(["fit", "--input", str(tmp_path / "missing.wav"),
                         "--out", str(tmp_path / "k.json")]) == 1
        assert capsys.readouterr().err.count("error") == 2

    def test_fit_failure_exit_code(self, tmp_path, monkeypatch):
        from gpss import kernelfit
        from gpss.errors import FitFailure
        tone_clip(tmp_path / "clip.wav")

        def fail(target, D, seed=0, **kw):
            raise FitFailure("forced", best=MsmKernelParams(1.0, 0.01, [1.0], [0.0]))

        monkeypatch.setattr(kernelfit, "fit_msm", fail)
        code = cli.main(["fit", "--input", str(tmp_path / "clip.wav"),
                         "--out", str(tmp_path / "k.json")])
        assert code == 2
        assert json.loads((tmp_path / "k.json").read_text())["fit_failed"]


class TestSeparate:
    def mixture(self, tmp_path, seconds=0.1, rate=FS):
        k1 = kernel_file(tmp_path / "k1.json", 250.0, rate)
        k2 = kernel_file(tmp_path / "k2.json", 2000.0, rate)
        t = np.arange(int(seconds * rate)) / rate
        _, y = sample_prior(GpMixturePrior([k1, k2], 1e-4), t, 0)
        write_wav(tmp_path / "mix.wav", 0.2 * y, rate)

    def test_writes_outputs(self, tmp_path):
        self.mixture(tmp_path)
        out = tmp_path / "out"
        code = cli.main(["separate", "--mixture", str(tmp_path / "mix.wav"),
                         "--kernels", str(tmp_path / "k1.json"), str(tmp_path / "k2.json"),
                         "--out", str(out), "--frame-seconds", "0.03", "--m-max", "40",
                         "--jobs", "1"])
        assert code == 0
        for j in range(2):
            x, rate = read_wav(out / "source_{}.wav".format(j))
            assert x.size == 800 and rate == FS
        lines = (out / "run_log.jsonl").read_text().splitlines()
        timing = json.loads((out / "timing.json").read_text())
        assert len(lines) == timing["frames"]
        assert timing["mode"] == "sparse"
        assert timing["total_optimization_minutes"] >= 0

    def test_single_kernel_and_full(self, tmp_path):
        self.mixture(tmp_path, seconds=0.05)
        out = tmp_path / "out"
        code = cli.main(["separate", "--mixture", str(tmp_path / "mix.wav"),
                         "--kernels", str(tmp_path / "k1.json"), "--out", str(out),
                         "--frame-seconds", "0.02", "--full"])
        assert code == 0
        assert sorted(p.name for p in out.glob("source_*.wav")) == ["source_0.wav"]
        assert json.loads((out / "timing.json").read_text())["mode"] == "full"

    def test_missing_kernel(self, tmp_path):
        self.mixture(tmp_path)
        assert cli.main(["separate", "--mixture", str(tmp_path / "mix.wav"),
                         "--kernels", str(tmp_path / "absent.json"),
                         "--out", str(tmp_path / "out")]) == 1

    def test_rate_mismatch(self, tmp_path, capsys):
        self.mixture(tmp_path)
        kernel_file(tmp_path / "k16.json", 250.0, rate=16000)
        assert cli.main(["separate", "--mixture", str(tmp_path / "mix.wav"),
                         "--kernels", str(tmp_path / "k16.json"),
                         "--out", str(tmp_path / "out")]) == 1
        assert "Hz" in capsys.readouterr().err


class TestEval:
    def run(self, tmp_path, true, est):
        write_sources(tmp_path / "true", true)
        write_sources(tmp_path / "est", est)
        out = tmp_path / "m.csv"
        code = cli.main(["eval", "--true", str(tmp_path / "true"), "--est",
                         str(tmp_path / "est"), "--out", str(out)])
        return code, (read_rows(out) if code == 0 else None)

    def sources(self, k=2, n=1000):
        q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((n, k + 1)))
        return 0.5 * q.T * np.sqrt(n) / 4

    def test_identity_capped(self, tmp_path):
        s = self.sources()
        code, rows = self.run(tmp_path, s, s)
        assert code == 0
        for row in rows:
            assert float(row["sdr_db"]) == float(row["sir_db"]) == float(row["sar_db"]) == 200.0
            assert float(row["rmse"]) == 0.0
        assert (tmp_path / "m.json").exists()

    def test_swapped_rows(self, tmp_path):
        s = self.sources()
        e = s[:2] + 0.2 * s[2]
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        _, rows = self.run(tmp_path / "a", s[:2], e)
        _, swapped = self.run(tmp_path / "b", s[1::-1], e[::-1])
        for a, b in ((rows[0], swapped[1]), (rows[1], swapped[0])):
            for key in ("sdr_db", "sir_db", "sar_db", "rmse"):
                assert float(a[key]) == pytest.approx(float(b[key]), rel=1e-6, abs=1e-9)

    def test_orthogonal_interference(self, tmp_path):
        s = self.sources()
        code, rows = self.run(tmp_path, s[:2], [s[0] + 0.1 * s[1], s[1]])
        assert float(rows[0]["sir_db"]) == pytest.approx(20.0, abs=0.01)

    def test_count_mismatch(self, tmp_path):
        s = self.sources()
        code, _ = self.run(tmp_path, s[:2], s[:1])
        assert code == 1

    def test_length_mismatch(self, tmp_path):
        s = self.sources()
        code, _ = self.run(tmp_path, s[:2], [s[0][:-1], s[1][:-1]])
        assert code == 1


class TestMakeBenchmark:
    def test_note_sequence(self, tmp_path):
        spec = tmp_path / "spec.json"
        pattern = [["C4"], ["E4"], ["G4"], ["C4", "E4"], ["C4", "G4"], ["E4", "G4"],
                   ["C4", "E4", "G4"]]
        spec.write_text(json.dumps({"kernels": ["C4", "E4", "G4"], "duration": 0.7,
                                    "seed": 5, "pattern": pattern}))
        out = tmp_path / "bench"
        assert cli.main(["make-benchmark", "--spec", str(spec), "--out", str(out),
                         "--train-seconds", "0.2"]) == 0
        names = sorted(p.name for p in out.glob("*.wav"))
        assert names == ["mixture.wav", "source_0.wav", "source_1.wav", "source_2.wav",
                         "train_0.wav", "train_1.wav", "train_2.wav"]
        meta = json.loads((out / "metadata.json").read_text())
        assert len(meta["pattern_edges"]) == 8
        again = tmp_path / "again"
        cli.main(["make-benchmark", "--spec", str(spec), "--out", str(again),
                  "--train-seconds", "0.2"])
        for name in names:
            assert (out / name).read_bytes() == (again / name).read_bytes()

    def test_matches_library(self, tmp_path):
        doc = {"kernels": ["E4"], "duration": 0.1, "seed": 2}
        (tmp_path / "s.json").write_text(json.dumps(doc))
        cli.main(["make-benchmark", "--spec", str(tmp_path / "s.json"),
                  "--out", str(tmp_path / "o"), "--train-seconds", "0.1"])
        mix, _ = read_wav(tmp_path / "o" / "mixture.wav")
        ref = make_benchmark(BenchmarkSpec.from_dict(doc)).mixture
        np.testing.assert_allclose(mix, ref.astype(np.float32))

    def test_invalid_spec(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"kernels": ["C4"], "colour": 1}))
        assert cli.main(["make-benchmark", "--spec", str(tmp_path / "s.json"),
                         "--out", str(tmp_path / "o")]) == 1


class TestBenchD:
    def test_one_row_per_d(self, tmp_path):
        spec = {"kernels": ["C4", "G4"], "duration": 0.15, "seed": 1,
                "sample_rate": 8000}
        (tmp_path / "s.json").write_text(json.dumps(spec))
        code = cli.main(["bench-d", "--spec", str(tmp_path / "s.json"), "--sweep", "1,3",
                         "--out", str(tmp_path / "o"), "--train-seconds", "0.2",
                         "--frame-seconds", "0.05", "--m-max", "30", "--jobs", "1"])
        assert code == 0
        med = read_rows(tmp_path / "o" / "sweep_median.csv")
        assert [int(r["D"]) for r in med] == [1, 3]
        full = read_rows(tmp_path / "o" / "sweep.csv")
        assert len(full) == 4
        assert set(full[0]) == set(cli.SWEEP_FIELDS)


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = cli.RunConfig(D=4, overlap=0.25, free=["sigma2", "noise"], sweep=[1, 2])
        cfg.save(tmp_path / "c.json")
        assert cli.RunConfig.load(tmp_path / "c.json") == cfg

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ParameterError):
            cli.RunConfig.from_dict({"D": 3, "Dee": 4})
        (tmp_path / "c.json").write_text(json.dumps({"Dee": 4}))
        assert cli.main(["--config", str(tmp_path / "c.json"), "fit"]) == 1

    @pytest.mark.parametrize("doc", [{"D": 0}, {"overlap": 1.0}, {"free": ["noise"]},
                                     {"frame_seconds": -1.0}])
    def test_validated(self, doc):
        with pytest.raises(ParameterError):
            cli.RunConfig.from_dict(doc)

    def test_config_supplies_defaults(self, tmp_path):
        tone_clip(tmp_path / "clip.wav")
        cfg = cli.RunConfig(input=str(tmp_path / "clip.wav"), out=str(tmp_path / "k.json"), D=2)
        cfg.save(tmp_path / "c.json")
        assert cli.main(["--config", str(tmp_path / "c.json"), "fit", "--D", "3"]) == 0
        assert load_kernel(tmp_path / "k.json").params.D == 3

    def test_seed_env(self, monkeypatch):
        monkeypatch.setenv("GPSS_SEED", "17")
        args = cli.build_parser().parse_args(["fit"])
        assert args.seed == 17
        args = cli.build_parser().parse_args(["fit", "--seed", "2"])
        assert args.seed == 2

    def test_help_documents_flags(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["separate", "--help"])
        text = capsys.readouterr().out
        for flag in ("--mixture", "--kernels", "--frame-seconds", "--overlap", "--full",
                     "--m-max", "--free", "--strict", "--jobs"):
            assert flag in text
