import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_chain
from lltlab.kernel import Functional, build_finite, build_iid, build_two_state
from lltlab.mixing import (BRUTE_MAX, JointLaw, brute_force_extrema, exact_variances, jacobi_singular_values,
                           joint_law, mixing_inequality_report, phi, psi, psi_prime, psi_star, rho_max_correlation,
                           start_steps, variance_ratio_check)

TWO_STATE_J = np.array([[0.3, 0.2], [0.2, 0.3]])
seeds = st.integers(0, 2**32 - 1)


def path_enumeration_variance(model, g, n):
    """Var S_n by summing over every path (oracle for small chains)."""
    size = model.n_states
    total, second = 0.0, 0.0
    for path in itertools.product(range(size), repeat=n):
        p = model.initial[path[0]]
        for k in range(1, n):
            p *= model.kernel(k + 1)[path[k - 1], path[k]]
        s = sum(g[x] for x in path)
        total += p * s
        second += p * s * s
    return second - total**2


class TestGoldenValues:
    def test_two_state_joint_law(self, two_state):
        assert np.allclose(joint_law(two_state, 1, 1).matrix, TWO_STATE_J, atol=1e-15)

    def test_two_state_coefficients(self):
        j = JointLaw(TWO_STATE_J)
        assert psi_prime(j) == pytest.approx(0.8, abs=1e-12)
        assert psi_star(j) == pytest.approx(1.2, abs=1e-12)
        assert phi(j) == pytest.approx(0.1, abs=1e-12)
        assert psi(j) == pytest.approx(0.2, abs=1e-12)
        assert rho_max_correlation(j) == pytest.approx(0.2, abs=1e-12)
        assert brute_force_extrema(j) == pytest.approx((0.8, 1.2, 0.1), abs=1e-12)

    def test_independence(self):
        r, c = np.array([0.2, 0.3, 0.5]), np.array([0.6, 0.4])
        j = JointLaw(np.outer(r, c))
        assert psi_prime(j) == pytest.approx(1.0) and psi_star(j) == pytest.approx(1.0)
        assert phi(j) == pytest.approx(0.0, abs=1e-15) and psi(j) == pytest.approx(0.0, abs=1e-15)
        assert rho_max_correlation(j) == pytest.approx(0.0, abs=1e-7)
        assert brute_force_extrema(j) == pytest.approx((1.0, 1.0, 0.0), abs=1e-12)

    def test_example3_lag_one(self, example3):
        rep = mixing_inequality_report(example3, [1])
        assert rep.psi_prime[0] == pytest.approx(example3.lower_psi_floor, abs=1e-12)
        assert rep.psi_prime[0] == pytest.approx(0.5, abs=1e-5)

    def test_two_state_lags(self, two_state):
        rep = mixing_inequality_report(two_state, range(1, 6))
        assert rep.passed
        assert rep.psi_prime[1] == pytest.approx(0.96, abs=1e-12)
        assert 1 - rep.psi_prime[1] == pytest.approx((1 - rep.psi_prime[0]) ** 2, abs=1e-12)
        assert np.allclose(rep.rho, 0.2 ** np.arange(1, 6), atol=1e-12)

    def test_iid_report(self, fair_coin):
        rep = mixing_inequality_report(fair_coin, range(1, 4))
        assert rep.passed
        assert np.allclose(rep.psi_prime, 1.0) and np.allclose(rep.phi, 0.0, atol=1e-15)

    def test_report_artifacts(self, two_state, tmp_path):
        rep = mixing_inequality_report(two_state, [1, 2])
        rep.to_csv(tmp_path / "m.csv")
        rep.to_json(tmp_path / "m.json")
        head = (tmp_path / "m.csv").read_text().splitlines()[0]
        assert head == "lag,psi_prime,psi_star,psi,phi,rho,bound_1_minus_a_pow_k"
        assert json.loads((tmp_path / "m.json").read_text())["pass"] is True


class TestValidation:
    def test_bad_joint_laws(self):
        with pytest.raises(ValueError):
            JointLaw(np.array([[0.5, 0.6], [0.0, 0.0]]))
        with pytest.raises(ValueError):
            JointLaw(np.array([[-0.1, 0.6], [0.5, 0.0]]))

    def test_zero_mass_atoms_are_dropped(self):
        j = JointLaw(np.array([[0.5, 0.0], [0.0, 0.5], [0.0, 0.0]]))
        assert j.matrix.shape == (2, 2)

    def test_enumeration_limit(self):
        size = BRUTE_MAX + 1
        with pytest.raises(ValueError):
            brute_force_extrema(JointLaw(np.full((size, 2), 1.0 / (2 * size))))

    def test_bad_lags(self, two_state):
        with pytest.raises(ValueError):
            mixing_inequality_report(two_state, [0])

    def test_horizon(self):
        q = [[0.5, 0.5], [0.5, 0.5]]
        m = build_finite([0.5, 0.5], [q, q])
        assert list(start_steps(m, 1)) == [1, 2]
        with pytest.raises(ValueError):
            mixing_inequality_report(m, [3])


class TestOracles:
    @given(seeds, st.integers(2, 4), st.integers(2, 4))
    @settings(max_examples=60, deadline=None)
    def test_atoms_equal_enumeration(self, seed, s1, s2):
        rng = np.random.default_rng(seed)
        j = JointLaw(rng.dirichlet(np.ones(s1 * s2)).reshape(s1, s2))
        lo, hi, ph = brute_force_extrema(j)
        assert abs(psi_prime(j) - lo) <= 1e-12
        assert abs(psi_star(j) - hi) <= 1e-12
        assert abs(phi(j) - ph) <= 1e-12

    def test_random_4x4_chains(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            j = joint_law(random_chain(rng, 4), 1, 1)
            lo, hi, _ = brute_force_extrema(j)
            assert psi_prime(j) == pytest.approx(lo, abs=1e-12)
            assert psi_star(j) == pytest.approx(hi, abs=1e-12)

    @given(seeds, st.integers(1, 9), st.integers(1, 9))
    @settings(max_examples=60, deadline=None)
    def test_jacobi_matches_lapack(self, seed, rows, cols):
        a = np.random.default_rng(seed).normal(size=(rows, cols))
        ref = np.linalg.svd(a, compute_uv=False)
        got = jacobi_singular_values(a)[: ref.size]
        assert np.allclose(got, ref, rtol=1e-10, atol=1e-12)

    @given(seeds, st.integers(2, 5))
    @settings(max_examples=40, deadline=None)
    def test_rho_dominates_random_correlations(self, seed, size):
        rng = np.random.default_rng(seed)
        j = JointLaw(rng.dirichlet(np.ones(size * size)).reshape(size, size))
        rho = rho_max_correlation(j)
        for _ in range(20):
            f, g = rng.normal(size=size), rng.normal(size=size)
            f -= j.r @ f
            g -= j.c @ g
            corr = f @ j.matrix @ g / np.sqrt((j.r @ f**2) * (j.c @ g**2))
            assert abs(corr) <= rho + 1e-10

    @given(seeds, st.integers(2, 4))
    @settings(max_examples=25, deadline=None)
    def test_inequalities_on_random_chains(self, seed, size):
        model = random_chain(np.random.default_rng(seed), size)
        rep = mixing_inequality_report(model, range(1, 5))
        assert rep.passed, rep.checks
        for pp, ps, ps_all in zip(rep.psi_prime, rep.psi_star, rep.psi):
            assert ps_all == pytest.approx(max(ps - 1, 1 - pp), abs=1e-15)


class TestVariance:
    def test_iid_ratio_is_one(self):
        m = build_iid([0.2, 0.3, 0.5])
        res = variance_ratio_check(m, Functional.from_values([0.0, 1.0, 5.0]), [10, 100])
        assert all(r["ratio"] == pytest.approx(1.0, abs=1e-12) for r in res["rows"])
        assert res["pass"]

    def test_two_state(self, two_state, pm_one):
        res = variance_ratio_check(two_state, pm_one, [100])
        assert (res["lower"], res["upper"]) == pytest.approx((2 / 3, 1.5))
        assert res["rows"][0]["ratio"] == pytest.approx(1.49375, abs=1e-10)
        assert res["pass"]

    def test_example3_indicator(self, example3):
        g = np.zeros(20)
        g[0] = 1.0
        res = variance_ratio_check(example3, Functional.from_values(g), [10, 100, 1000])
        assert res["pass"]
        assert res["lower"] == pytest.approx(1 / 3, abs=1e-5)

    @given(seeds, st.integers(2, 3), st.integers(1, 7))
    @settings(max_examples=30, deadline=None)
    def test_recursion_matches_path_sum(self, seed, size, n):
        rng = np.random.default_rng(seed)
        model = random_chain(rng, size)
        g = rng.normal(size=size)
        sigma2, _ = exact_variances(model, Functional.from_values(g), n)
        assert sigma2[n - 1] == pytest.approx(path_enumeration_variance(model, g, n), rel=1e-9, abs=1e-12)

    def test_needs_positive_floor(self):
        m = build_finite([0.5, 0.5], [[[1.0, 0.0], [0.0, 1.0]]])
        with pytest.raises(ValueError):
            variance_ratio_check(m, Functional.from_values([0.0, 1.0]), [10])
