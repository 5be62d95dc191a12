import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import random_chain
from lltlab import _quad
from lltlab._quad import ConvergenceError, simpson
from lltlab.charfn import (INDEPENDENT_A, CharfnCurve, charfn_tail_integral, composed_transfer_norm, d2_quantity,
                           effective_a, empirical_curve, exact_curve, lemma_estimate2_check, lemma_estimate3_check,
                           lemma_sweep, marginal_charfn, nagaev_bound, sum_charfn_exact, verify_factorization)
from lltlab.kernel import Functional, build_finite, build_iid, simulate_paths

U = np.linspace(-math.pi, math.pi, 200)
seeds = st.integers(0, 2**32 - 1)


def path_enumeration_charfn(model, g, n, u):
    out = 0j
    for path in itertools.product(range(model.n_states), repeat=n):
        p = model.initial[path[0]]
        for k in range(1, n):
            p *= model.kernel(k + 1)[path[k - 1], path[k]]
        out += p * np.exp(1j * u * sum(g[x] for x in path))
    return out


class TestCharfn:
    def test_zero(self, example3):
        f = Functional.from_values(np.arange(1.0, 21.0))
        assert sum_charfn_exact(example3, f, 30, [0.0])[0] == 1.0
        assert marginal_charfn(example3, f, 4, [0.0])[0] == pytest.approx(1.0, abs=1e-15)

    def test_fair_coin(self, fair_coin, pm_one):
        assert np.allclose(marginal_charfn(fair_coin, pm_one, 1, U), np.cos(U), atol=1e-15)
        assert np.allclose(sum_charfn_exact(fair_coin, pm_one, 9, U), np.cos(U) ** 9, atol=1e-14)

    def test_iid_power(self):
        m = build_iid([0.1, 0.6, 0.3])
        f = Functional.from_values([-2.0, 0.5, 3.0])
        one = marginal_charfn(m, f, 1, U)
        assert np.allclose(sum_charfn_exact(m, f, 7, U), one**7, atol=1e-13)

    @given(seeds, st.integers(2, 3), st.integers(1, 6), st.floats(-4, 4))
    @settings(max_examples=40, deadline=None)
    def test_matches_path_enumeration(self, seed, size, n, u):
        rng = np.random.default_rng(seed)
        model = random_chain(rng, size)
        g = rng.normal(size=size)
        got = sum_charfn_exact(model, Functional.from_values(g), n, [u])[0]
        assert abs(got - path_enumeration_charfn(model, g, n, u)) < 1e-12

    @given(seeds, st.integers(2, 4), st.integers(1, 20))
    @settings(max_examples=30, deadline=None)
    def test_hermitian_and_bounded(self, seed, size, n):
        rng = np.random.default_rng(seed)
        model = random_chain(rng, size)
        f = Functional.from_values(rng.normal(size=size))
        u = np.linspace(0.1, 5, 25)
        plus, minus = sum_charfn_exact(model, f, n, u), sum_charfn_exact(model, f, n, -u)
        assert np.allclose(plus, np.conj(minus), atol=1e-14)
        assert np.all(np.abs(plus) <= 1 + 1e-12)

    def test_example3_marginal_vs_simulation(self, example3):
        f = Functional.from_values(np.arange(1.0, 21.0))
        states = simulate_paths(example3, 3, 1_000_000, 17)[:, 2]
        emp = np.exp(0.3j * (states + 1.0)).mean()
        assert abs(marginal_charfn(example3, f, 3, [0.3])[0] - emp) < 3e-3

    def test_curves(self, two_state, pm_one, tmp_path):
        c = exact_curve(two_state, pm_one, 8, U)
        assert np.all(np.abs(c.values) <= c.bound + 1e-10)
        c.to_csv(tmp_path / "c.csv")
        assert (tmp_path / "c.csv").read_text().startswith("u,re,im,modulus,nagaev_bound\n")
        e = empirical_curve(np.array([1.0, -1.0]), 1, U)
        assert np.allclose(e.values, np.cos(U))
        with pytest.raises(ValueError):
            CharfnCurve(U, U, 1, "guessed")


class TestFactorization:
    def test_trivial_at_zero(self, two_state, pm_one):
        assert nagaev_bound(two_state, pm_one, 10, [0.0])[0] == 1.0
        assert verify_factorization(two_state, pm_one, 10, [0.0])["max_violation"] <= 0.0

    def test_two_state(self, two_state, pm_one):
        res = verify_factorization(two_state, pm_one, 64, U)
        assert res["pass"] and res["a"] == pytest.approx(0.8)

    def test_independent_a(self, fair_coin):
        assert effective_a(fair_coin) == INDEPENDENT_A

    def test_zero_floor_rejected(self):
        m = build_finite([0.5, 0.5], [[[1.0, 0.0], [0.0, 1.0]]])
        with pytest.raises(ValueError):
            effective_a(m)

    @given(seeds, st.integers(2, 4), st.integers(1, 40))
    @settings(max_examples=40, deadline=None)
    def test_random_chains(self, seed, size, n):
        rng = np.random.default_rng(seed)
        model = random_chain(rng, size)
        f = Functional.from_values(rng.normal(size=size))
        assert verify_factorization(model, f, n, np.linspace(-4, 4, 41))["pass"]


class TestLemmas:
    def test_estimate2_independent_equality(self, fair_coin, pm_one):
        res = lemma_estimate2_check(fair_coin, pm_one, 2, U)
        assert res["psi_prime_value"] == pytest.approx(1.0)
        assert abs(res["max_violation"]) <= 1e-12

    def test_estimate2_two_state(self, two_state, pm_one):
        assert lemma_estimate2_check(two_state, pm_one, 2, [1.0])["max_violation"] <= 1e-12

    def test_estimate2_example3(self, example3):
        f = Functional.from_values(np.arange(1.0, 21.0))
        u = np.linspace(-math.pi, math.pi, 100)
        assert all(lemma_estimate2_check(example3, f, k, u)["pass"] for k in range(2, 12))

    def test_estimate3_zero_is_two_step_kernel(self, two_state, pm_one):
        assert composed_transfer_norm(two_state, pm_one, 3, 0.0) == pytest.approx(1.0, abs=1e-14)

    def test_estimate3_iid(self, fair_coin, pm_one):
        for u in np.linspace(-3, 3, 13):
            assert composed_transfer_norm(fair_coin, pm_one, 3, u) == pytest.approx(abs(math.cos(u)), abs=1e-14)
        assert lemma_estimate3_check(fair_coin, pm_one, 3, U)["pass"]

    def test_estimate3_two_state(self, two_state, pm_one):
        assert lemma_estimate3_check(two_state, pm_one, 3, np.linspace(-math.pi, math.pi, 100))["pass"]

    @given(seeds, st.integers(2, 4))
    @settings(max_examples=25, deadline=None)
    def test_random_sweeps(self, seed, size):
        rng = np.random.default_rng(seed)
        model = random_chain(rng, size)
        f = Functional.from_values(rng.normal(size=size))
        assert lemma_sweep(model, f, np.linspace(-3, 3, 31), steps=range(2, 6))["pass"]

    def test_bad_step(self, two_state, pm_one):
        with pytest.raises(ValueError):
            composed_transfer_norm(two_state, pm_one, 1, 0.5)


class TestIntegrals:
    def test_wallis(self, fair_coin, pm_one):
        # int over |t| < pi B / 2 of |cos(t / B)|^n equals 2 B times a Wallis integral
        n, b = 10, 3.0
        wallis = math.pi / 2 * math.prod(range(1, n, 2)) / math.prod(range(2, n + 1, 2))
        got = charfn_tail_integral(fair_coin, pm_one, n, b, 0.0, math.pi / 2, lattice_span=2.0, rtol=1e-10)
        assert got == pytest.approx(2 * b * wallis, rel=1e-8)

    def test_against_adaptive_quadrature(self, two_state, pm_one):
        n, b = 16, 4.0
        ref, _ = integrate.quad(lambda t: abs(sum_charfn_exact(two_state, pm_one, n, [t / b])[0]), 1.0,
                                math.pi / 2 * b, epsabs=1e-12, epsrel=1e-10, limit=200)
        got = charfn_tail_integral(two_state, pm_one, n, b, 1.0, math.pi / 2, lattice_span=2.0, rtol=1e-9)
        assert got == pytest.approx(2 * ref, rel=1e-7)

    def test_empty_domain(self, two_state, pm_one):
        assert charfn_tail_integral(two_state, pm_one, 8, 2.0, 10.0, 1.0) == 0.0

    def test_d2_decreasing(self, two_state, pm_one):
        vals = [d2_quantity(two_state, pm_one, n, math.sqrt(n), 0.5, 2.0) for n in (64, 128, 256)]
        assert vals[0] > vals[1] > vals[2] > 0

    def test_panel_cap(self, two_state, pm_one, monkeypatch):
        monkeypatch.setattr(_quad, "MAX_PANELS", 512)
        with pytest.raises(ConvergenceError):
            charfn_tail_integral(two_state, pm_one, 400, 20.0, 1.0, math.pi / 2, rtol=1e-14, atol=0.0)

    def test_simpson_polynomial(self):
        val, _ = simpson(lambda x: x**3 - 2 * x, 0.0, 2.0, rtol=1e-14)
        assert val == pytest.approx(0.0, abs=1e-13)
        val, _ = simpson(np.exp, 0.0, 1.0, rtol=1e-12)
        assert val == pytest.approx(math.e - 1, rel=1e-11)
