import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from gpss.errors import ParameterError
from gpss.kernel import (MsmKernelParams, SumKernel, TWO_PI, gram, kernel_curves, load_kernel,
                         msm_eval, save_kernel, spectral_density, write_kernel_curves)

from conftest import random_msm


positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
freq = st.floats(min_value=0.0, max_value=2e4, allow_nan=False)


@st.composite
def msm_params(draw, max_D=4):
    D = draw(st.integers(1, max_D))
    weights = draw(st.lists(st.floats(0.01, 10.0), min_size=D, max_size=D))
    freqs = draw(st.lists(freq, min_size=D, max_size=D))
    return MsmKernelParams(draw(positive), draw(st.floats(1e-4, 1.0)), weights, freqs)


class TestParams:
    def test_canonical_order_and_merge(self):
        p = MsmKernelParams(1.0, 0.1, [0.2, 0.3, 0.5], [30.0, 10.0, 30.0])
        assert p.freqs == (10.0, 30.0)
        assert p.weights == pytest.approx((0.3, 0.7))
        assert p.D == 2

    @pytest.mark.parametrize("kwargs", [
        dict(variance=0.0, lengthscale=1.0),
        dict(variance=-1.0, lengthscale=1.0),
        dict(variance=1.0, lengthscale=0.0),
        dict(variance=float("nan"), lengthscale=1.0),
    ])
    def test_rejects_bad_scalars(self, kwargs):
        with pytest.raises(ParameterError):
            MsmKernelParams(weights=[1.0], freqs=[0.0], **kwargs)

    def test_rejects_bad_components(self):
        with pytest.raises(ParameterError):
            MsmKernelParams(1.0, 1.0, [-0.1], [0.0])
        with pytest.raises(ParameterError):
            MsmKernelParams(1.0, 1.0, [0.0, 0.0], [0.0, 1.0])
        with pytest.raises(ParameterError):
            MsmKernelParams(1.0, 1.0, [1.0], [-2.0])
        with pytest.raises(ParameterError):
            MsmKernelParams(1.0, 1.0, [1.0, 1.0], [1.0])

    def test_from_hz(self):
        p = MsmKernelParams.from_hz(1.0, 0.1, [1.0], [440.0])
        assert p.freqs_array[0] == pytest.approx(TWO_PI * 440.0)
        assert p.freqs_hz[0] == pytest.approx(440.0)


class TestMsmEval:
    def test_unit_at_zero(self):
        assert msm_eval(MsmKernelParams(1.0, 1.0, [1.0], [0.0]), 0.0) == 1.0

    def test_exponential_decay(self):
        p = MsmKernelParams(2.0, 1.0, [1.0], [0.0])
        assert msm_eval(p, 1.0) == pytest.approx(2.0 * math.exp(-1.0), abs=1e-12)
        assert msm_eval(p, 1.0) == pytest.approx(0.735759, abs=1e-6)

    def test_cosines_cancel(self):
        p = MsmKernelParams(1.0, 1e6, [1.0, 1.0], [0.0, math.pi])
        assert msm_eval(p, 1.0) == pytest.approx(0.0, abs=1e-5)

    def test_against_scalar_formula(self, rng):
        p = random_msm(rng, D=3)
        for tau in rng.uniform(0, 0.05, 20):
            ref = p.variance * math.exp(-tau / p.lengthscale) * sum(
                w * math.cos(om * tau) for w, om in zip(p.weights, p.freqs))
            assert msm_eval(p, tau) == pytest.approx(ref, rel=1e-12, abs=1e-15)

    def test_negative_lag_rejected(self):
        with pytest.raises(ParameterError):
            msm_eval(MsmKernelParams(1.0, 1.0), -0.1)

    def test_k0(self):
        p = MsmKernelParams(3.0, 0.5, [0.2, 0.3], [1.0, 2.0])
        assert p.k0 == pytest.approx(1.5)
        assert msm_eval(p, 0.0) == pytest.approx(p.k0)

    def test_sum_kernel(self, rng):
        a, b = random_msm(rng), random_msm(rng)
        tau = rng.uniform(0, 0.1, 50)
        np.testing.assert_allclose(msm_eval(SumKernel([a, b]), tau), a(tau) + b(tau), rtol=1e-12)
        assert SumKernel([a, b]).k0 == pytest.approx(a.k0 + b.k0)
        with pytest.raises(ParameterError):
            SumKernel([])


class TestKernelProperties:
    @settings(max_examples=50, deadline=None)
    @given(msm_params(), st.floats(0.0, 10.0), st.floats(-5.0, 5.0))
    def test_stationarity(self, p, a, shift):
        b = a + 0.37
        k1 = gram(p, [a], [b])[0, 0]
        k2 = gram(p, [a + shift], [b + shift])[0, 0]
        assert k1 == pytest.approx(k2, rel=1e-9, abs=1e-12 * p.k0)

    @settings(max_examples=50, deadline=None)
    @given(msm_params())
    def test_bounded_by_k0(self, p):
        tau = np.random.default_rng(0).uniform(0.0, 5.0, 1000)
        assert np.all(np.abs(msm_eval(p, tau)) <= p.k0 + 1e-12)

    @settings(max_examples=30, deadline=None)
    @given(msm_params(), st.integers(2, 64), st.integers(0, 2 ** 31))
    def test_psd(self, p, n, seed):
        t = np.sort(np.random.default_rng(seed).uniform(0.0, 0.05, n))
        K = gram(p, t)
        eig = np.linalg.eigvalsh(K + 1e-8 * p.k0 * np.eye(n))
        assert np.all(eig > 0)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(msm_params(), min_size=1, max_size=4), st.integers(0, 2 ** 31))
    def test_gram_additivity(self, parts, seed):
        t = np.random.default_rng(seed).uniform(0.0, 0.05, 20)
        total = gram(SumKernel(parts), t)
        summed = sum(gram(p, t) for p in parts)
        np.testing.assert_allclose(total, summed, rtol=1e-12, atol=1e-12 * np.abs(summed).max())


class TestGram:
    def test_single_point(self, rng):
        p = random_msm(rng)
        np.testing.assert_array_equal(gram(p, [0.0]), [[p.k0]])

    def test_two_point_example(self):
        p = MsmKernelParams(1.0, 0.1, [1.0], [0.0])
        e = math.exp(-0.1)
        np.testing.assert_allclose(gram(p, [0.0, 0.01], [0.0, 0.01]), [[1, e], [e, 1]],
                                   rtol=1e-12)

    def test_identical_parts_double(self, rng):
        p = random_msm(rng)
        t = np.sort(rng.uniform(0, 0.02, 15))
        np.testing.assert_allclose(gram(SumKernel([p, p]), t), 2 * gram(p, t), rtol=1e-12)

    @pytest.mark.parametrize("uniform", [True, False])
    def test_exact_symmetry(self, rng, uniform):
        p = random_msm(rng, D=4)
        t = np.arange(40) / 16000.0 if uniform else np.sort(rng.uniform(0, 0.01, 40))
        K = gram(p, t)
        assert np.array_equal(K, K.T)

    def test_toeplitz_path_matches_direct(self, rng):
        p = random_msm(rng, D=3)
        t = 0.3 + np.arange(50) / 16000.0
        direct = msm_eval(p, np.abs(t[:, None] - t[None, :]))
        np.testing.assert_allclose(gram(p, t), direct, rtol=1e-9, atol=1e-12)

    def test_rectangular(self, rng):
        p = random_msm(rng)
        r, c = rng.uniform(0, 0.01, 5), rng.uniform(0, 0.01, 7)
        K = gram(p, r, c)
        assert K.shape == (5, 7)
        np.testing.assert_allclose(K, msm_eval(p, np.abs(r[:, None] - c[None, :])))

    def test_non_finite_times(self, rng):
        with pytest.raises(ParameterError):
            gram(random_msm(rng), [0.0, np.inf])


class TestSpectralDensity:
    def test_dc_lorentzian_value(self):
        p = MsmKernelParams(2.0, 0.05, [0.7], [0.0])
        assert spectral_density(p, [0.0])[0] == pytest.approx(2.0 * 0.7 * 0.05 / math.pi)

    def test_dc_value_from_sampled_kernel(self):
        # S(0) = (1/2pi) * integral of k over the real line, by quadrature of samples
        p = MsmKernelParams(1.5, 0.02, [1.0], [0.0])
        tau = np.linspace(0.0, 60 * p.lengthscale, 400001)
        area = 2.0 * integrate.trapezoid(msm_eval(p, tau), tau)
        assert spectral_density(p, [0.0])[0] == pytest.approx(area / TWO_PI, rel=1e-6)

    def test_cosine_transform_oracle(self, rng):
        # S(w) = (1/pi) int_0^inf k(tau) cos(w tau) dtau, by oscillatory quadrature
        p = random_msm(rng, D=3, max_hz=200.0)
        for w in (0.0, 300.0, 900.0):
            val, _ = integrate.quad(lambda x: msm_eval(p, x), 0.0, np.inf, weight="cos",
                                    wvar=w) if w > 0 else integrate.quad(
                lambda x: msm_eval(p, x), 0.0, np.inf)
            assert spectral_density(p, [w])[0] == pytest.approx(val / math.pi, rel=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_integrates_to_k0(self, seed):
        p = random_msm(np.random.default_rng(seed))
        w = np.linspace(-2e6, 2e6, 4_000_001)
        total = integrate.trapezoid(spectral_density(p, w), w)
        assert total == pytest.approx(p.k0, rel=0.01)

    def test_peak_locations(self):
        f = np.array([200.0, 550.0, 1300.0])
        p = MsmKernelParams.from_hz(1.0, 0.2, [1.0, 0.5, 0.25], f)
        grid = np.linspace(0.0, 2000.0, 400001)
        dens = spectral_density(p, TWO_PI * grid)
        interior = (dens[1:-1] > dens[:-2]) & (dens[1:-1] > dens[2:])
        peaks = np.sort(grid[1:-1][interior])
        np.testing.assert_allclose(peaks, f, rtol=1e-3)

    def test_single_component_is_maximal_at_its_frequency(self):
        om = TWO_PI * 440.0
        p = MsmKernelParams(1.0, 0.1, [1.0], [om])
        others = spectral_density(p, TWO_PI * np.array([0.0, 100.0, 430.0, 450.0, 3000.0]))
        assert np.all(spectral_density(p, [om])[0] > others)

    def test_nonnegative(self, rng):
        p = random_msm(rng, D=4)
        assert np.all(spectral_density(p, np.linspace(0, 1e5, 1000)) >= 0)


class TestKernelFile:
    def test_lossless_round_trip(self, rng, tmp_path):
        p = random_msm(rng, D=5)
        path = tmp_path / "k.json"
        save_kernel(path, p, name="piano", sample_rate_hz=16000.0, extra={"final_mse": 1e-5})
        kf = load_kernel(path)
        assert kf.params == p
        assert kf.name == "piano"
        assert kf.sample_rate_hz == 16000.0
        assert kf.extra["final_mse"] == 1e-5

    def test_schema(self, rng, tmp_path):
        p = random_msm(rng, D=2)
        path = tmp_path / "k.json"
        save_kernel(path, p, name="x")
        doc = json.loads(path.read_text())
        assert {"name", "sample_rate_hz", "variance", "lengthscale_s", "components"} <= set(doc)
        assert [c["freq_hz"] for c in doc["components"]] == pytest.approx(list(p.freqs_hz))

    def test_hz_only_document(self, tmp_path):
        doc = {"name": "a", "sample_rate_hz": 8000, "variance": 1.0, "lengthscale_s": 0.1,
               "components": [{"weight": 1.0, "freq_hz": 100.0}]}
        path = tmp_path / "k.json"
        path.write_text(json.dumps(doc))
        assert load_kernel(path).params.freqs_hz[0] == pytest.approx(100.0)

    def test_malformed(self, tmp_path):
        path = tmp_path / "k.json"
        path.write_text(json.dumps({"variance": 1.0}))
        with pytest.raises(ParameterError):
            load_kernel(path)


class TestCurves:
    def test_curves(self, tmp_path):
        p = MsmKernelParams.from_hz(1.0, 0.1, [1.0], [440.0])
        c = kernel_curves(p, 0.01, 16000.0, n_freq=64)
        assert c["lag_s"].size == 161
        assert c["k"][0] == pytest.approx(1.0)
        assert c["freq_hz"][-1] == pytest.approx(8000.0)
        path = tmp_path / "curves.csv"
        write_kernel_curves(path, p, 0.01, 16000.0, n_freq=64)
        lines = path.read_text().splitlines()
        assert lines[0] == "kind,x,y"
        assert len(lines) == 1 + 161 + 64
