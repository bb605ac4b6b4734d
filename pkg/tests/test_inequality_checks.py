"""Inequality reports: verdict logic, saturations, probes, limits."""

import math

import numpy as np
import pytest

from convexineq import functionals as fn
from convexineq import inequality_checks as ic
from convexineq.errors import DomainViolationError, PreconditionError
from convexineq.phi_functions import p_beta, phi_power, phi_square, phi_xlogx
from convexineq.potentials import (
    ConvexMeasure,
    cauchy_potential,
    make_cauchy,
    standard_gaussian_psi,
)

HOLDS = ("holds", "holds_with_equality")


class TestVerdictClassifier:
    def test_violated_requires_three_sigma(self):
        assert ic.classify_verdict(1.0, 0.0, 0.9, 0.0) == "violated"
        assert ic.classify_verdict(1.0, 0.02, 0.98, 0.02) != "violated"

    def test_equality_band(self):
        assert ic.classify_verdict(1.0, 1e-3, 1.001, 1e-3) == "holds_with_equality"

    def test_zero_vs_zero(self):
        assert ic.classify_verdict(0.0, 0.0, 0.0, 0.0) == "holds_with_equality"
        assert ic.classify_verdict(0.0, 0.0, 0.0, 0.0, degenerate_inconclusive=True) \
            == "inconclusive"

    def test_noise_swamped_is_inconclusive(self):
        assert ic.classify_verdict(0.5, 0.2, 1.0, 0.2) == "inconclusive"

    def test_clean_holds(self):
        assert ic.classify_verdict(0.5, 1e-6, 1.0, 1e-6) == "holds"

    def test_nonfinite_inconclusive(self):
        assert ic.classify_verdict(math.nan, 0.0, 1.0, 0.0) == "inconclusive"


class TestPhiEntropyCheck:
    def test_equality_case(self, cauchy_1_5, x1_1d):
        # linear functions saturate: lhs = rhs = 1/7
        rep = ic.check_phi_entropy(cauchy_1_5, phi_square(), x1_1d)
        assert rep.verdict == "holds_with_equality"
        assert rep.lhs == pytest.approx(1.0 / 7.0, rel=1e-5)
        assert rep.rhs == pytest.approx(1.0 / 7.0, rel=1e-5)

    def test_constant_field(self, cauchy_1_5):
        const = fn.linear_field([0.0], 2.0, range_interval=(1.9, 2.1))
        rep = ic.check_phi_entropy(cauchy_1_5, phi_square(), const)
        assert rep.verdict in HOLDS
        assert rep.lhs == pytest.approx(0.0, abs=1e-12)

    def test_strict_instance(self, cauchy_1_10):
        pb = p_beta(10.0, 1)
        rep = ic.check_phi_entropy(cauchy_1_10, phi_power(pb),
                                   fn.tanh_field(1, 0.1))
        assert rep.verdict == "holds"
        assert rep.ratio < 1.0

    def test_inadmissible_phi_rejected(self, cauchy_1_5):
        f = fn.gaussian_bump_field(1, 0.2)
        with pytest.raises(PreconditionError, match="not admissible"):
            ic.check_phi_entropy(cauchy_1_5, phi_xlogx(), f)

    def test_beta_range_enforced(self, x1_1d):
        m = make_cauchy(1, 1.8)  # beta < n + 1
        with pytest.raises(PreconditionError):
            ic.check_phi_entropy(m, phi_square(), x1_1d)

    def test_flat_potential_rejected(self, x1_1d):
        # c = 0 carries no uniform convexity: the theorem does not apply
        base = make_cauchy(1, 5.0)
        flat = cauchy_potential(1)
        object.__setattr__(flat, "convexity_constant_c", 0.0)
        m = ConvexMeasure(flat, base.beta, 1, base.normalization_Z, base.z_error,
                          base.radius, base.points_per_dim)
        with pytest.raises(PreconditionError, match="uniformly convex"):
            ic.check_phi_entropy(m, phi_square(), x1_1d)


class TestBecknerCheck:
    def test_poincare_equality(self, cauchy_1_5):
        # p = 1 with f = 1 + x: var(x) = 1/7 = (1/(2(beta-1))) E[|grad|^2 phi]
        rep = ic.check_beckner(cauchy_1_5, 1.0, fn.linear_field([1.0], 1.0))
        assert rep.inequality_id == "poincare"
        assert rep.verdict == "holds_with_equality"
        assert rep.lhs == pytest.approx(1.0 / 7.0, rel=1e-5)

    def test_constant_field(self, cauchy_1_5):
        const = fn.linear_field([0.0], 1.5, range_interval=(1.4, 1.6))
        rep = ic.check_beckner(cauchy_1_5, 1.2, const)
        assert rep.verdict in HOLDS

    def test_grid_and_mc_agree(self, cauchy_2_5):
        f = fn.gaussian_bump_field(2, 0.2)
        grid = ic.check_beckner(cauchy_2_5, 1.2, f)
        mc = ic.check_beckner(cauchy_2_5, 1.2, f, method="mc", budget=200000, seed=3)
        assert grid.verdict in HOLDS and mc.verdict in HOLDS
        assert grid.ratio == pytest.approx(mc.ratio, abs=0.05)

    def test_p_out_of_range(self, cauchy_1_5):
        f = fn.gaussian_bump_field(1, 0.2)
        with pytest.raises(PreconditionError) as e:
            ic.check_beckner(cauchy_1_5, 1.95, f)
        assert e.value.limit == pytest.approx(p_beta(5.0, 1))

    def test_positive_field_required_above_p1(self, cauchy_1_5, x1_1d):
        with pytest.raises(PreconditionError, match="positive"):
            ic.check_beckner(cauchy_1_5, 1.3, x1_1d)


class TestSharpnessProbe:
    def test_ratios_monotone_to_one(self, cauchy_1_10):
        g = fn.coordinate_field(0, 1, range_interval=(-3.2, 3.2))
        probe = ic.sharpness_probe_beckner(cauchy_1_10, p_beta(10.0, 1), g,
                                           [0.3, 0.1, 0.03])
        r = probe.ratios
        assert r[0] < r[1] < r[2] <= 1.0 + 1e-9
        assert r[2] >= 0.98
        assert probe.convergence_rate == pytest.approx(2.0, abs=0.3)

    def test_non_eigenfunction_direction_stays_below_one(self, cauchy_1_10):
        # g = x^2 - E[x^2] is orthogonal to the saturating direction
        e2 = 1.0 / 17.0
        g = fn.polynomial_field([-e2, 0.0, 1.0], range_interval=(-e2 - 1e-9, 11.0))
        probe = ic.sharpness_probe_beckner(cauchy_1_10, 1.5, g, [0.05, 0.02])
        assert all(r < 0.95 for r in probe.ratios)

    def test_zero_epsilon_inconclusive(self, cauchy_1_10):
        g = fn.coordinate_field(0, 1, range_interval=(-3.2, 3.2))
        probe = ic.sharpness_probe_beckner(cauchy_1_10, 1.5, g, [0.0, 0.05])
        assert probe.verdicts[0] == "inconclusive"
        assert math.isnan(probe.ratios[0])

    def test_domain_violation_for_large_epsilon(self, cauchy_2_5):
        R = cauchy_2_5.radius
        g = fn.coordinate_field(0, 2, range_interval=(-R - 0.1, R + 0.1))
        with pytest.raises(DomainViolationError):
            ic.sharpness_probe_beckner(cauchy_2_5, 1.1, g, [0.3])

    def test_nonzero_mean_rejected(self, cauchy_1_10):
        g = fn.gaussian_bump_field(1, 0.5)  # mean > 0
        with pytest.raises(PreconditionError, match="zero mean"):
            ic.sharpness_probe_beckner(cauchy_1_10, 1.5, g, [0.1])


class TestCovarianceCheck:
    def test_equality_case(self, cauchy_1_5, x1_1d):
        rep = ic.check_covariance(cauchy_1_5, x1_1d, x1_1d, 2.0)
        assert rep.verdict == "holds_with_equality"
        assert rep.lhs == pytest.approx(1.0 / 7.0, rel=0.01)
        assert rep.rhs == pytest.approx(1.0 / 7.0, rel=0.01)

    def test_constant_factor(self, cauchy_1_5, x1_1d):
        const = fn.linear_field([0.0], 4.0, range_interval=(3.9, 4.1))
        rep = ic.check_covariance(cauchy_1_5, x1_1d, const, 2.0)
        assert rep.verdict in HOLDS
        assert rep.lhs == pytest.approx(0.0, abs=1e-10)
        assert rep.rhs == pytest.approx(0.0, abs=1e-10)

    def test_orthogonal_coordinates(self, cauchy_2_5, x1_2d, x2_2d):
        rep = ic.check_covariance(cauchy_2_5, x1_2d, x2_2d, 3.0)
        assert rep.verdict == "holds"
        assert rep.lhs <= 1e-10
        assert rep.rhs > 0.1

    def test_p_above_threshold_rejected(self, cauchy_2_5, x1_2d):
        with pytest.raises(PreconditionError) as e:
            ic.check_covariance(cauchy_2_5, x1_2d, x1_2d, 40.0)
        assert e.value.limit == pytest.approx(34.970562748477136)

    def test_p_cap(self, cauchy_1_5, x1_1d):
        with pytest.raises(PreconditionError, match="capped"):
            ic.check_covariance(cauchy_1_5, x1_1d, x1_1d, 100.0)

    def test_beta_range(self, x1_1d):
        m = make_cauchy(1, 1.5)
        with pytest.raises(PreconditionError):
            ic.check_covariance(m, x1_1d, x1_1d, 2.0)

    def test_large_p_one_dimension(self, cauchy_1_5, x1_1d):
        rep = ic.check_covariance(cauchy_1_5, x1_1d, x1_1d, 64.0)
        assert rep.verdict in HOLDS

    def test_mc_route(self, cauchy_2_5, x1_2d, x2_2d):
        rep = ic.check_covariance(cauchy_2_5, x1_2d, x2_2d, 3.0, method="mc",
                                  budget=200000, seed=8)
        assert rep.verdict in HOLDS + ("inconclusive",)
        assert rep.verdict != "violated"


class TestNoFalseAlarms:
    def test_mixed_suite_zero_violations(self, cauchy_1_10, cauchy_2_5):
        reports = []
        bump1 = fn.gaussian_bump_field(1, 0.3)
        bump2 = fn.gaussian_bump_field(2, 0.3)
        for p in np.linspace(1.0, p_beta(10.0, 1), 7):
            reports.append(ic.check_beckner(cauchy_1_10, float(p), bump1))
        for p in np.linspace(1.0, p_beta(5.0, 2), 5):
            reports.append(ic.check_beckner(cauchy_2_5, float(p), bump2))
        reports.append(ic.check_phi_entropy(cauchy_1_10, phi_power(1.5), bump1))
        reports.append(ic.check_covariance(cauchy_2_5, bump2,
                                           fn.coordinate_field(0, 2), 2.5))
        assert all(r.verdict != "violated" for r in reports)

    def test_beckner_ratio_bounded_over_sweep(self, cauchy_1_10):
        f = fn.tanh_field(1, 0.2)
        for p in np.linspace(1.0, p_beta(10.0, 1), 20):
            rep = ic.check_beckner(cauchy_1_10, float(p), f)
            assert math.isfinite(rep.ratio)
            assert rep.lhs <= rep.rhs + 3.0 * (rep.lhs_err + rep.rhs_err)


class TestLimitExperiments:
    def test_lsi_ratios_monotone_below_one(self):
        psi = standard_gaussian_psi(1)
        f = fn.gaussian_bump_field(1, 0.2)
        reps = ic.limit_experiment_lsi(psi, [50.0, 200.0, 1000.0], f)
        ratios = [r.ratio for r in reps]
        assert all(r.verdict != "violated" for r in reps)
        assert all(ratio <= 1.0 + 3.0 * 1e-6 for ratio in ratios)
        assert ratios[0] < ratios[1] < ratios[2]

    def test_lsi_constant_field_inconclusive(self):
        psi = standard_gaussian_psi(1)
        const = fn.linear_field([0.0], 1.0, range_interval=(0.9, 1.1))
        reps = ic.limit_experiment_lsi(psi, [100.0], const)
        assert reps[0].verdict == "inconclusive"

    def test_lsi_approaches_gaussian_reference(self):
        psi = standard_gaussian_psi(1)
        f = fn.gaussian_bump_field(1, 0.2)
        reps = ic.limit_experiment_lsi(psi, [1000.0], f)
        ent, rhs = ic.gaussian_lsi_reference(psi, f)
        assert reps[0].lhs == pytest.approx(ent, rel=0.02)
        assert reps[0].rhs == pytest.approx(rhs, rel=0.02)

    def test_ccl_matches_brascamp_lieb(self, x1_1d):
        psi = standard_gaussian_psi(1)
        reps = ic.limit_experiment_ccl(psi, [1000.0], x1_1d, x1_1d, 2.0)
        assert reps[0].lhs == pytest.approx(1.0, rel=0.02)
        assert reps[0].rhs == pytest.approx(1.0, rel=0.02)
        lhs_ref, rhs_ref = ic.logconcave_ccl_reference(psi, x1_1d, x1_1d, 2.0)
        assert lhs_ref == pytest.approx(1.0, rel=1e-6)
        assert rhs_ref == pytest.approx(1.0, rel=1e-6)

    def test_ccl_constant_h(self, x1_1d):
        psi = standard_gaussian_psi(1)
        const = fn.linear_field([0.0], 1.0, range_interval=(0.9, 1.1))
        reps = ic.limit_experiment_ccl(psi, [200.0, 1000.0], x1_1d, const, 2.0)
        for r in reps:
            assert r.lhs == pytest.approx(0.0, abs=1e-9)
            assert r.verdict != "violated"

    def test_ccl_rhs_decreases_towards_limit(self, x1_1d):
        # p = 4 sweep: the finite-beta bound tightens toward the psi-based one
        psi = standard_gaussian_psi(1)
        reps = ic.limit_experiment_ccl(psi, [50.0, 200.0, 1000.0], x1_1d, x1_1d, 4.0)
        rhs = [r.rhs for r in reps]
        assert rhs[0] > rhs[1] > rhs[2]
        _, rhs_ref = ic.logconcave_ccl_reference(psi, x1_1d, x1_1d, 4.0)
        assert rhs[2] == pytest.approx(rhs_ref, rel=0.05)
        assert all(r.verdict != "violated" for r in reps)


class TestReportPlumbing:
    def test_json_schema(self, cauchy_1_5, x1_1d):
        rep = ic.check_covariance(cauchy_1_5, x1_1d, x1_1d, 2.0, config_hash="abc", seed=7)
        d = rep.to_json_dict()
        assert set(d) == {"inequality_id", "lhs", "lhs_err", "rhs", "rhs_err",
                          "ratio", "verdict", "config_hash", "seed"}
        assert d["config_hash"] == "abc" and d["seed"] == 7

    def test_nan_ratio_serializes_to_none(self):
        rep = ic.InequalityReport("beckner", 0.0, 0.0, 0.0, 0.0, math.nan,
                                  "inconclusive", "grid")
        assert rep.to_json_dict()["ratio"] is None
