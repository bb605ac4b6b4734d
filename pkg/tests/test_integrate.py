"""Expectation engine: grids, samplers, error estimates, determinism."""

import numpy as np
import pytest

from convexineq import integrate
from convexineq.errors import ParameterError, StateError
from convexineq.potentials import make_cauchy, make_limit_family, standard_gaussian_psi


class TestQuadratureGrid:
    def test_weights_sum_to_one(self, cauchy_1_5, cauchy_2_4):
        for m in (cauchy_1_5, cauchy_2_4):
            g = integrate.measure_grid(m)
            assert abs(g.weights.sum() - 1.0) < 1e-8

    def test_refinement_mass_stability(self, cauchy_1_5):
        # h -> h/2 and R -> R+2 changes the total mass by less than 1e-8
        m = cauchy_1_5
        g0 = integrate.measure_grid(m)
        g1 = integrate.measure_grid(m, 2 * m.points_per_dim, m.radius + 2.0)
        assert abs(g1.weights.sum() - g0.weights.sum()) < 1e-8

    def test_polynomial_exactness_under_refinement(self, cauchy_1_5):
        # degree <= 3 times the density: doubled resolution agrees within 1e-8
        m = cauchy_1_5
        g0 = integrate.measure_grid(m)
        g1 = integrate.measure_grid(m, 2 * m.points_per_dim)
        for k in range(4):
            v0 = float(g0.weights @ g0.nodes[:, 0] ** k)
            v1 = float(g1.weights @ g1.nodes[:, 0] ** k)
            assert abs(v1 - v0) < 1e-8

    def test_expectation_of_one(self, cauchy_1_5):
        val, err = integrate.expectation(cauchy_1_5, lambda X: np.ones(len(X)))
        assert val == pytest.approx(1.0, abs=1e-9)
        assert err < 1e-8

    def test_heavy_tail_error_covers_truncation(self):
        # beta = 2: E[x^2] = 1 with a slowly converging tail; the reported
        # error must cover the actual truncation error
        m = make_cauchy(1, 2.0)
        val, err = integrate.expectation(m, lambda X: X[:, 0] ** 2)
        assert abs(val - 1.0) <= err

    def test_three_dimensional_grid(self):
        m = make_cauchy(3, 4.0)
        val, err = integrate.expectation(m, lambda X: X[:, 0] ** 2)
        assert val == pytest.approx(1.0 / 3.0, abs=max(3.0 * err, 1e-4))


class TestExactSampler:
    def test_bit_identical_reproduction(self, cauchy_1_5):
        b1 = integrate.sample_cauchy(cauchy_1_5, 50000, seed=42)
        b2 = integrate.sample_cauchy(cauchy_1_5, 50000, seed=42)
        assert np.array_equal(b1.points, b2.points)
        assert b1.method == "exact-cauchy"

    def test_block_structure_independent_of_count(self, cauchy_1_5):
        # a longer run starts with exactly the shorter run's samples
        b1 = integrate.sample_cauchy(cauchy_1_5, 1000, seed=9)
        b2 = integrate.sample_cauchy(cauchy_1_5, 5000, seed=9)
        assert np.array_equal(b2.points[:1000], b1.points)

    def test_moments_beta5(self, cauchy_1_5):
        b = integrate.sample_cauchy(cauchy_1_5, 10**6, seed=1)
        vals = b.points[:, 0] ** 2
        mean, se = integrate.mc_mean_err(vals, b)
        assert abs(mean - 1.0 / 7.0) <= 3.0 * se

    def test_symmetry_mean_zero(self, cauchy_2_4):
        b = integrate.sample_cauchy(cauchy_2_4, 10**6, seed=2)
        mean, se = integrate.mc_mean_err(b.points[:, 0], b)
        assert abs(mean) <= 3.0 * se

    def test_ball_probability_matches_grid(self, cauchy_2_4):
        # P(|x| <= 1) against the quadrature oracle
        b = integrate.sample_cauchy(cauchy_2_4, 10**6, seed=3)
        inside = (np.linalg.norm(b.points, axis=1) <= 1.0).astype(float)
        mean, se = integrate.mc_mean_err(inside, b)
        grid_val, grid_err = integrate.expectation(
            cauchy_2_4, lambda X: (np.linalg.norm(X, axis=1) <= 1.0).astype(float)
        )
        # the indicator is discontinuous, so the grid error is O(h); allow both bands
        assert abs(mean - grid_val) <= 3.0 * se + max(grid_err, 2e-3)

    def test_rejects_non_cauchy(self):
        m = make_limit_family(standard_gaussian_psi(1), 100.0, points_per_dim=512)
        with pytest.raises(ParameterError):
            integrate.sample_cauchy(m, 100, seed=0)


class TestMetropolis:
    def test_acceptance_tuned_and_not_flagged(self, cauchy_1_5):
        b = integrate.sample_metropolis(cauchy_1_5, 100000, burn_in=1000, seed=5)
        assert 0.2 <= b.acceptance_rate <= 0.6
        assert not b.flagged

    def test_agrees_with_exact_sampler(self, cauchy_1_5):
        bm = integrate.sample_metropolis(cauchy_1_5, 200000, burn_in=2000, seed=6)
        be = integrate.sample_cauchy(cauchy_1_5, 200000, seed=7)
        m1, s1 = integrate.mc_mean_err(bm.points[:, 0] ** 2, bm)
        m2, s2 = integrate.mc_mean_err(be.points[:, 0] ** 2, be)
        assert abs(m1 - m2) <= 3.0 * (s1 + s2)

    def test_skewness_of_symmetric_target(self, cauchy_1_5):
        b = integrate.sample_metropolis(cauchy_1_5, 200000, burn_in=2000, seed=8)
        x = b.points[:, 0]
        skew_vals = (x - x.mean()) ** 3
        mean, se = integrate.mc_mean_err(skew_vals, b)
        assert abs(mean) <= 3.0 * se

    def test_limit_family_target(self):
        m = make_limit_family(standard_gaussian_psi(1), 1e4, points_per_dim=512)
        b = integrate.sample_metropolis(m, 200000, burn_in=2000, seed=9)
        mean, se = integrate.mc_mean_err(b.points[:, 0] ** 2, b)
        assert abs(mean - 1.0) <= 3.0 * se

    def test_iact_inflates_errors(self, cauchy_1_5):
        b = integrate.sample_metropolis(cauchy_1_5, 100000, burn_in=1000, seed=10)
        vals = b.points[:, 0] ** 2
        _, se = integrate.mc_mean_err(vals, b)
        naive = vals.std(ddof=1) / np.sqrt(vals.size)
        assert se > 1.5 * naive  # the chain is visibly autocorrelated

    def test_deterministic(self, cauchy_1_5):
        b1 = integrate.sample_metropolis(cauchy_1_5, 20000, burn_in=500, seed=11)
        b2 = integrate.sample_metropolis(cauchy_1_5, 20000, burn_in=500, seed=11)
        assert np.array_equal(b1.points, b2.points)
        assert b1.acceptance_rate == b2.acceptance_rate


class TestExpectationFrontEnd:
    def test_grid_mc_agreement_on_builtin_integrands(self, cauchy_1_5):
        integrands = [
            lambda X: X[:, 0],
            lambda X: X[:, 0] ** 2,
            lambda X: np.exp(-(X[:, 0] ** 2)),
            lambda X: np.tanh(X[:, 0]) + 1.0,
            lambda X: 1.0 + X[:, 0] ** 2,  # the weight itself
        ]
        for i, f in enumerate(integrands):
            gv, ge = integrate.expectation(cauchy_1_5, f, "grid")
            mv, me = integrate.expectation(cauchy_1_5, f, "mc", budget=200000, seed=20 + i)
            assert abs(gv - mv) <= 3.0 * (ge + me), f"integrand {i}"

    def test_mc_only_measure_has_no_grid(self):
        m = make_cauchy(4, 6.0)
        with pytest.raises(StateError):
            integrate.measure_grid(m)
        val, se = integrate.expectation(m, lambda X: X[:, 0] ** 2, "mc",
                                        budget=200000, seed=1)
        assert abs(val - 1.0 / 6.0) <= 3.0 * se

    def test_unknown_method(self, cauchy_1_5):
        with pytest.raises(ParameterError):
            integrate.expectation(cauchy_1_5, lambda X: X[:, 0], "magic")
