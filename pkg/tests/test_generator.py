"""Discretized generator: assembly invariants, spectra, flow, Poisson."""

import numpy as np
import pytest

from convexineq import functionals as fn
from convexineq import generator as gen
from convexineq import pointwise_calculus as pc
from convexineq.errors import (
    EvaluationError,
    ParameterError,
    PreconditionError,
    UnsupportedDimensionError,
)
from convexineq.phi_functions import phi_power, phi_square
from convexineq.potentials import make_cauchy


@pytest.fixture(scope="module")
def dg15():
    return gen.assemble(make_cauchy(1, 5.0), points=2000)


@pytest.fixture(scope="module")
def dg2d():
    return gen.assemble(make_cauchy(2, 5.0), points=64)


class TestAssembly:
    def test_stiffness_symmetric_psd(self, dg15):
        S = dg15.stiffness
        asym = abs(S - S.T).max()
        assert asym < 1e-12
        vals, _ = gen.eigensystem(dg15, k=1)
        norm = abs(S).max()
        assert vals[0] >= -1e-10 * norm

    def test_constants_in_kernel(self, dg15, dg2d):
        for dg in (dg15, dg2d):
            one = np.ones(dg.size)
            assert np.max(np.abs(dg.stiffness @ one)) < 1e-10

    def test_self_adjointness_random_pairs(self, dg15):
        # <mass Lf, g> = <f, mass Lg> for 50 random pairs
        rng = np.random.default_rng(0)
        norm = abs(dg15.stiffness).max()
        for _ in range(50):
            f = rng.standard_normal(dg15.size)
            g = rng.standard_normal(dg15.size)
            a = float((dg15.mass * dg15.apply(f)) @ g)
            b = float(f @ (dg15.mass * dg15.apply(g)))
            assert abs(a - b) <= 1e-10 * norm * np.linalg.norm(f) * np.linalg.norm(g)

    def test_apply_to_coordinate(self, dg15):
        # L x = -2 (beta - 1) x away from the boundary
        x = dg15.nodes[:, 0]
        Lx = dg15.apply(x)
        bulk = np.abs(x) < dg15.radius / 2.0
        rel = np.abs(Lx[bulk] + 8.0 * x[bulk]) / np.maximum(np.abs(8.0 * x[bulk]), 1e-2)
        assert rel.max() < 0.01

    def test_apply_to_constant(self, dg15):
        assert np.max(np.abs(dg15.apply(np.ones(dg15.size)))) < 1e-10

    def test_dimension_and_size_limits(self):
        with pytest.raises(UnsupportedDimensionError):
            gen.assemble(make_cauchy(3, 4.0), points=16)
        with pytest.raises(ParameterError):
            gen.assemble(make_cauchy(2, 5.0), points=256)


class TestSpectralGap:
    def test_gap_values(self):
        # exact gap 2 (beta - 1), eigenfunction x
        for beta in (3.0, 5.0):
            dg = gen.assemble(make_cauchy(1, beta), points=2000)
            assert gen.spectral_gap(dg) == pytest.approx(2.0 * (beta - 1.0), rel=0.01)

    def test_second_eigenvector_is_coordinate(self, dg15):
        _, vecs = gen.eigensystem(dg15, k=2)
        x = dg15.nodes[:, 0]
        v = vecs[:, 1]
        corr = abs(np.sum(dg15.mass * v * x)) / np.sqrt(
            np.sum(dg15.mass * v * v) * np.sum(dg15.mass * x * x)
        )
        assert corr > 0.999

    def test_gap_above_convexity_bound(self, dg15, dg2d):
        assert gen.spectral_gap(dg15) >= 2.0 * 4.0 * (1.0 - 1e-6)
        assert gen.spectral_gap(dg2d) >= 8.0 * (1.0 - 0.05)

    def test_gap_stable_under_refinement(self):
        # defaults chosen so the gap moves by < 0.2% under (R+10, 2N)
        m = make_cauchy(1, 5.0)
        g0 = gen.spectral_gap(gen.assemble(m, points=2000))
        g1 = gen.spectral_gap(gen.assemble(m, points=4000, radius=m.radius + 10.0))
        assert abs(g1 - g0) / g0 < 0.002

    def test_positive_gap_orthogonal_complement(self, dg2d):
        vals, _ = gen.eigensystem(dg2d, k=2)
        assert vals[1] > 0.0


class TestEvolve:
    def test_constant_invariant(self, dg15):
        out = gen.evolve(dg15, np.ones(dg15.size), [0.0, 0.3, 1.0])
        np.testing.assert_allclose(out, 1.0, atol=1e-10)

    def test_coordinate_decays_exponentially(self, dg15):
        x = dg15.nodes[:, 0]
        out = gen.evolve(dg15, x, [0.05, 0.1, 0.2])
        bulk = np.abs(x) < dg15.radius / 2.0
        for ft, t in zip(out, (0.05, 0.1, 0.2)):
            expected = np.exp(-8.0 * t) * x
            rel = np.max(np.abs(ft[bulk] - expected[bulk])) / np.max(np.abs(expected[bulk]))
            assert rel < 0.01

    def test_mean_preserved(self, dg15):
        rng = np.random.default_rng(5)
        f0 = rng.standard_normal(dg15.size)
        m0 = dg15.mean(f0)
        for ft in gen.evolve(dg15, f0, [0.01, 0.5, 2.0]):
            assert abs(dg15.mean(ft) - m0) < 1e-8

    def test_converges_to_mean(self, dg15):
        gap = gen.spectral_gap(dg15)
        rng = np.random.default_rng(6)
        f0 = rng.standard_normal(dg15.size)
        t = 10.0 / gap
        ft = gen.evolve(dg15, f0, [t])[0]
        dev0 = np.sqrt(dg15.mean((f0 - dg15.mean(f0)) ** 2))
        dev1 = np.sqrt(dg15.mean((ft - dg15.mean(f0)) ** 2))
        assert dev1 <= np.exp(-10.0) * dev0 * 1.01

    def test_crank_nicolson_agrees_with_spectral(self):
        # force the stepping path on a grid small enough to also diagonalize
        m = make_cauchy(1, 5.0)
        dg = gen.assemble(m, points=300)
        x = dg.nodes[:, 0]
        spectral = gen.evolve(dg, x, [0.1])[0]
        dg_big = gen.assemble(m, points=300)
        dg_big.__dict__["_cache"] = {}
        import convexineq.generator as G

        old = G._SPECTRAL_LIMIT
        G._SPECTRAL_LIMIT = 10  # force Crank-Nicolson
        try:
            stepped = gen.evolve(dg_big, x, [0.1])[0]
        finally:
            G._SPECTRAL_LIMIT = old
        assert np.max(np.abs(stepped - spectral)) < 1e-3 * np.max(np.abs(spectral))

    def test_negative_time_rejected(self, dg15):
        with pytest.raises(ParameterError):
            gen.evolve(dg15, np.ones(dg15.size), [-0.1])


class TestAlphaTrace:
    def test_equality_case_decay(self, dg15):
        # alpha'(t)/alpha'(0) = exp(-16 t) for f0 = x, Phi = square
        x = dg15.nodes[:, 0]
        tr = gen.alpha_trace(dg15, phi_square(), x, [0.05, 0.1, 0.2])
        ratios = tr.alpha_prime[1:] / tr.alpha_prime[0]
        np.testing.assert_allclose(ratios, np.exp(-16.0 * tr.times[1:]), rtol=0.02)
        assert tr.rate_bound == pytest.approx(16.0)
        assert tr.decay_fit_rate == pytest.approx(16.0, rel=0.02)
        assert tr.bound_satisfied()

    def test_constant_initial_state(self, dg15):
        tr = gen.alpha_trace(dg15, phi_square(), np.full(dg15.size, 2.0), [0.1, 0.5])
        np.testing.assert_allclose(tr.alpha_prime, 0.0, atol=1e-12)

    def test_alpha_monotone_and_derivative_consistent(self, dg15):
        # alpha nondecreasing; alpha' matches the difference quotient within 1%
        f0 = 1.0 + 0.2 * np.tanh(dg15.nodes[:, 0])
        times = np.linspace(0.0, 0.3, 61)
        tr = gen.alpha_trace(dg15, phi_power(1.5), f0, times)
        assert np.all(np.diff(tr.alpha) >= -1e-12)
        mid_rate = 0.5 * (tr.alpha_prime[1:] + tr.alpha_prime[:-1])
        fd = np.diff(tr.alpha) / np.diff(tr.times)
        mask = mid_rate > 1e-8 * mid_rate.max()
        assert np.max(np.abs(fd[mask] - mid_rate[mask]) / mid_rate[mask]) < 0.01

    def test_admissible_power_decays_fast_enough(self, dg15):
        f0 = 1.0 + 0.3 * np.exp(-dg15.nodes[:, 0] ** 2)
        tr = gen.alpha_trace(dg15, phi_power(1.5), f0, np.linspace(0.0, 0.2, 9))
        assert tr.decay_fit_rate >= 16.0 * 0.98
        assert tr.bound_satisfied(rtol=1e-3)

    def test_flow_leaving_interval_rejected(self, dg15):
        from convexineq.errors import DomainViolationError

        with pytest.raises(DomainViolationError):
            gen.alpha_trace(dg15, phi_power(1.5), dg15.nodes[:, 0], [0.1])


class TestPoisson:
    def test_coordinate_inversion(self, dg15):
        # L u = x has u = -x/8 (x is an eigenfunction)
        x = dg15.nodes[:, 0]
        u = gen.solve_poisson(dg15, x)
        bulk = np.abs(x) < dg15.radius / 2.0
        rel = np.max(np.abs(u[bulk] + x[bulk] / 8.0)) / np.max(np.abs(x[bulk] / 8.0))
        assert rel < 0.01

    def test_zero_data(self, dg15):
        u = gen.solve_poisson(dg15, np.zeros(dg15.size))
        assert np.all(u == 0.0)

    def test_nonzero_mean_rejected(self, dg15):
        with pytest.raises(PreconditionError):
            gen.solve_poisson(dg15, np.ones(dg15.size))

    def test_covariance_integration_by_parts(self, dg15):
        # cov(g, h) = -E(g, u) with L u = h - E[h], for g = x + x^2, h = x
        x = dg15.nodes[:, 0]
        g = x + x**2
        h = x - dg15.mean(x)
        u = gen.solve_poisson(dg15, h)
        cov_direct = dg15.mean(g * x) - dg15.mean(g) * dg15.mean(x)
        cov_ibp = -dg15.dirichlet(g, u)
        assert cov_ibp == pytest.approx(cov_direct, rel=1e-6)

    def test_matches_semigroup_integral(self, dg15):
        # u = integral of P_t h over t, by quadrature on the eigendecay
        x = dg15.nodes[:, 0]
        h = x - dg15.mean(x)
        u = gen.solve_poisson(dg15, h)
        ts = np.linspace(0.0, 4.0, 801)
        flows = gen.evolve(dg15, h, ts)
        integral = -np.trapezoid(flows, ts, axis=0)
        bulk = np.abs(x) < dg15.radius / 2.0
        rel = np.max(np.abs(integral[bulk] - u[bulk])) / np.max(np.abs(u[bulk]))
        assert rel < 0.01


class TestDiscretePoincare:
    def test_random_vectors_1d(self, dg15):
        # var(f) <= E(f,f)/gap and also <= E(f,f)/(c (beta-1)) at this resolution
        gap = gen.spectral_gap(dg15)
        bound = 2.0 * (dg15.beta - 1.0)
        rng = np.random.default_rng(21)
        for _ in range(100):
            f = rng.standard_normal(dg15.size)
            var = dg15.mean(f**2) - dg15.mean(f) ** 2
            energy = dg15.dirichlet(f)
            assert var <= energy / gap * (1.0 + 1e-8)
            assert var <= energy / bound * (1.0 + 1e-6)


class TestCommutationRelation:
    def test_residual_vanishes_on_smooth_functions(self, cauchy_2_5):
        rng = np.random.default_rng(33)
        fields = [
            fn.gaussian_bump_field(2, 0.7, 1.3, 1.0, center=[0.2, -0.4]),
            fn.polynomial_field([0.5, 1.0, -0.3, 0.1], n=2),
            fn.tanh_field(2, 0.6),
        ]
        pts = rng.uniform(-2.0, 2.0, (34, 2))
        for f in fields:
            for x in pts:
                res = pc.commutation_residual(cauchy_2_5, f, x)
                assert np.max(np.abs(res)) < 1e-6, f.label


class TestFlowTraceCsv:
    def test_csv_columns(self, dg15, tmp_path):
        x = dg15.nodes[:, 0]
        tr = gen.alpha_trace(dg15, phi_square(), x, [0.05, 0.1])
        path = tmp_path / "flow.csv"
        tr.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "t,alpha,alpha_prime,bound"
