import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from lltlab.kernel import Functional, build_example1, build_iid, simulate_partial_sums
from lltlab.stable import (CHARFN_TAIL, NormalizerSchedule, StableLaw, TailModel, c_sqrt_n_normalizer,
                           density_mass, density_table, fit_stable_scale, inversion_cutoff, mean_abs_normalizer,
                           sample_tail_increment, solve_normalizer, stable_charfn, stable_density, tail_normalizers,
                           tail_transform, truncated_second_moment, variance_normalizer)

GAUSS = StableLaw(2.0, 1.0 / math.sqrt(2.0))
CAUCHY = StableLaw(1.0, 1.0)


def quad_density(law, x):
    """Fourier inversion by adaptive oscillatory quadrature."""
    sym, _ = integrate.quad(lambda t: math.exp(-abs(law.scale * t) ** law.p), 0, np.inf, weight="cos", wvar=x)
    if law.beta == 0.0:
        return sym / math.pi
    phase = law.beta * math.tan(math.pi * law.p / 2)

    def integrand(t):
        m = (law.scale * t) ** law.p
        return math.exp(-m) * math.cos(m * phase - t * x)

    val, _ = integrate.quad(integrand, 0, 60 / law.scale, limit=400, epsabs=1e-13)
    return val / math.pi


class TestLaws:
    def test_charfn_golden(self):
        t = np.linspace(-5, 5, 41)
        assert stable_charfn(GAUSS, [0.0])[0] == 1.0
        assert np.allclose(stable_charfn(GAUSS, t), np.exp(-t * t / 2), atol=1e-15)
        assert np.allclose(stable_charfn(CAUCHY, t), np.exp(-np.abs(t)), atol=1e-15)

    @pytest.mark.parametrize("kw", [dict(p=0.0), dict(p=2.5), dict(p=1.5, scale=0.0), dict(p=1.5, beta=2.0),
                                    dict(p=1.0, beta=0.5), dict(p=2.0, beta=-0.1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            StableLaw(**kw)

    @pytest.mark.parametrize("law", [GAUSS, CAUCHY, StableLaw(1.5, 2.0), StableLaw(0.7, 0.5)])
    def test_cutoff_drops_little_mass(self, law):
        def beyond(t):
            f = lambda s: mpmath.e ** (-((law.scale * s) ** law.p))
            return 2 * float(mpmath.quad(f, [t, 10 * t, 100 * t, mpmath.inf]))

        t = inversion_cutoff(law)
        # bisection stops on the boundary itself
        assert beyond(t) <= CHARFN_TAIL * (1 + 1e-6)
        assert beyond(0.9 * t) > CHARFN_TAIL


class TestDensity:
    def test_golden_values(self):
        assert stable_density(GAUSS, [0.0])[0] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-9)
        assert stable_density(CAUCHY, [0.0])[0] == pytest.approx(1 / math.pi, abs=1e-9)

    def test_closed_forms(self):
        x = np.linspace(-20, 20, 81)
        assert np.allclose(stable_density(GAUSS, x), np.exp(-x * x / 2) / math.sqrt(2 * math.pi), atol=1e-9)
        assert np.allclose(stable_density(CAUCHY, x), 1 / (math.pi * (1 + x * x)), atol=1e-9)

    @pytest.mark.parametrize("law", [StableLaw(1.5, 1.0), StableLaw(0.8, 1.3), StableLaw(1.5, 1.0, beta=0.5)])
    def test_against_adaptive_quadrature(self, law):
        x = np.array([-7.0, -2.5, -0.3, 0.0, 0.4, 1.7, 6.0, 30.0])
        ours = stable_density(law, x)
        ref = np.array([quad_density(law, v) for v in x])
        assert np.allclose(ours, ref, atol=1e-8)

    @given(st.sampled_from([0.6, 1.0, 1.3, 1.5, 1.9, 2.0]), st.floats(0.2, 5.0), st.floats(0, 50))
    @settings(max_examples=25, deadline=None)
    def test_symmetric_laws_are_even(self, p, scale, x):
        law = StableLaw(p, scale)
        h = stable_density(law, [x, -x])
        assert abs(h[0] - h[1]) <= 1e-10

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_mass(self, p):
        res = density_mass(StableLaw(p, 1.0))
        assert abs(res["mass"] - 1.0) <= 1e-6
        assert res["min_density"] > -1e-9

    def test_table_csv(self, tmp_path):
        density_table(GAUSS, [0.0, 1.0]).to_csv(tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "x,h_L" and len(lines) == 3


class TestTailModel:
    def test_pareto_survival(self):
        t = TailModel(1.5)
        assert np.allclose(t.survival([0.5, 1.0, 4.0]), [1.0, 1.0, 4.0**-1.5])
        assert t.mean_abs() == pytest.approx(3.0)
        assert t.mean() == 0.0

    @given(st.floats(0.3, 1.95), st.floats(1e-12, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_magnitude_inverts_survival(self, p, u):
        t = TailModel(p, x0=2.0)
        assert float(t.survival(t.magnitude(u))) == pytest.approx(u, rel=1e-9)

    @given(st.floats(1e-9, 0.4))
    @settings(max_examples=40, deadline=None)
    def test_log_tail_quantile(self, u):
        t = TailModel(1.5, x0=3.0, ell="log", kappa=1.0, gamma=1.0)
        top = float(t.survival(np.array(3.0)))
        x = float(t.magnitude(u))
        if u < top:
            assert float(t.survival(x)) == pytest.approx(u, rel=1e-9)
        else:
            assert x == 3.0

    def test_log_tail_mean_abs(self):
        t = TailModel(1.5, x0=3.0, ell="log", kappa=1.0, gamma=1.0)
        ref = 3.0 + integrate.quad(lambda x: float(t.survival(x)), 3.0, np.inf, limit=200)[0]
        assert t.mean_abs() == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize("kw", [dict(p=2.0), dict(p=1.5, x0=0.0), dict(p=1.5, c_plus=0.7),
                                    dict(p=1.5, ell="log", x0=1.0), dict(p=1.5, ell="weird")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TailModel(**kw)

    def test_p_below_one(self):
        t = TailModel(0.8)
        assert t.mean_abs() == math.inf
        with pytest.raises(ValueError):
            t.mean()


class TestSampling:
    def test_symmetric_mean(self):
        t = TailModel(1.9)
        x = sample_tail_increment(t, 1_000_000, 3)
        sigma = math.sqrt(np.var(x))
        assert abs(x.mean()) <= 4 * sigma / math.sqrt(x.size)

    def test_tail_counts(self):
        t = TailModel(1.5)
        x = sample_tail_increment(t, 1_000_000, 4)
        for level in (2.0, 5.0, 10.0):
            p = level**-1.5
            hits = np.count_nonzero(np.abs(x) > level)
            assert abs(hits - p * x.size) <= 3 * math.sqrt(x.size * p * (1 - p))
        assert abs(np.mean(x > 2.0) - 0.5 * 2.0**-1.5) < 3e-3

    def test_one_sided(self):
        t = TailModel(1.5, c_plus=1.0, c_minus=0.0)
        raw = sample_tail_increment(t, 10_000, 5, recenter=False)
        assert raw.min() >= 1.0
        centered = sample_tail_increment(t, 10_000, 5)
        assert np.allclose(centered, raw - 3.0)

    def test_transform_edges(self):
        t = TailModel(1.5)
        x = tail_transform(t, np.array([1e-300, 0.25, 0.5, 0.75, 1.0 - 2**-53]))
        assert np.all(np.isfinite(x))
        assert x[0] > 0 and x[-1] < 0


class TestNormalizers:
    def test_pareto_closed_form(self):
        assert solve_normalizer(TailModel(1.5), 1000) == pytest.approx(100.0, rel=1e-10)
        b = [solve_normalizer(TailModel(1.9), n) for n in (10**4, 10**5, 10**6)]
        assert b[-1] == pytest.approx(10 ** (6 / 1.9), rel=1e-10)
        assert b[0] < b[1] < b[2]

    def test_log_residual(self):
        t = TailModel(1.5, x0=3.0, ell="log")
        b = solve_normalizer(t, 10**4)
        assert abs(10**4 * float(t.survival(b)) - 1) <= 1e-10

    def test_too_small_n(self):
        with pytest.raises(ValueError):
            solve_normalizer(TailModel(1.5, x0=3.0, ell="log", kappa=0.1), 1)

    def test_schedule(self, tmp_path):
        s = tail_normalizers(TailModel(1.5), [100, 1000])
        assert s[1000] == pytest.approx(100.0) and s.increasing and s.info["max_residual"] <= 1e-10
        with pytest.raises(KeyError):
            s[7]
        s.to_csv(tmp_path / "b.csv")
        assert (tmp_path / "b.csv").read_text().splitlines()[0] == "n,B_n,method"
        with pytest.raises(ValueError):
            NormalizerSchedule([1], [0.0], "tail_solve")
        with pytest.raises(ValueError):
            NormalizerSchedule([1], [1.0], "magic")
        with pytest.raises(ValueError):
            c_sqrt_n_normalizer(-1.0, [1])

    def test_mean_abs_on_discretized_normal(self):
        grid = np.linspace(-5, 5, 201)
        w = np.exp(-grid**2 / 2)
        w /= w.sum()
        var = float(w @ grid**2)
        batch = simulate_partial_sums(build_iid(w), Functional.from_values(grid), 256, 100_000, 6)
        b = mean_abs_normalizer([batch])[256]
        assert b == pytest.approx(math.sqrt(256 * var), rel=0.03)

    def test_gaussian_regime_agreement(self):
        batch = simulate_partial_sums(build_example1(), Functional.named("identity", shift=0.5), 512, 100_000, 7)
        assert mean_abs_normalizer([batch])[512] == pytest.approx(variance_normalizer([batch])[512], rel=0.05)

    def test_degenerate(self, two_state):
        batch = simulate_partial_sums(two_state, Functional.from_values([0.0, 0.0]), 10, 100, 1)
        with pytest.raises(ValueError):
            mean_abs_normalizer([batch])
        with pytest.raises(ValueError):
            variance_normalizer([batch])


class TestDiagnostics:
    def test_bounded_and_two_point(self):
        res = truncated_second_moment(values=[-1.0, 1.0], probs=[0.5, 0.5], x_grid=[1.0, 2.0, 10.0])
        assert np.allclose(res["H"], 1.0) and np.allclose(res["ratio"], 1.0)
        assert res["slowly_varying"]
        u = np.random.default_rng(0).uniform(-3, 3, 1000)
        assert np.allclose(truncated_second_moment(u, [3.0, 30.0])["ratio"], 1.0)

    def test_pareto_not_slowly_varying(self):
        x = sample_tail_increment(TailModel(1.5), 1_000_000, 8, recenter=False)
        res = truncated_second_moment(x, [20.0, 40.0])
        assert res["ratio"][0] == pytest.approx(math.sqrt(2), rel=0.1)
        assert not res["slowly_varying"]

    def test_empty_sample(self):
        with pytest.raises(ValueError):
            truncated_second_moment(np.array([]), [1.0])

    def test_fit_scale_cauchy_and_gauss(self):
        rng = np.random.default_rng(9)
        cauchy = np.tan(math.pi * (rng.random(200_000) - 0.5))
        assert fit_stable_scale(cauchy, 1.0, 1.0)["scale"] == pytest.approx(1.0, rel=0.02)
        normal = rng.normal(size=200_000) * 3.0
        assert fit_stable_scale(normal, 3.0, 2.0)["scale"] == pytest.approx(1 / math.sqrt(2), rel=0.02)

    def test_fit_needs_band_points(self):
        with pytest.raises(ValueError):
            fit_stable_scale(np.zeros(10), 1.0, 1.5)
