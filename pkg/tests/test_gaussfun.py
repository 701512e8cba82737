import math

import numpy as np
import pytest

from fbsc import gaussfun as gf
from fbsc.errors import ValidationError, ZeroDispersionError


class TestScalars:
    def test_trivial_values(self):
        assert gf.q_func(0.0) == pytest.approx(0.5)
        assert gf.q_inv(0.5) == pytest.approx(0.0, abs=1e-15)

    def test_qinv_01_against_high_precision(self):
        # mpmath-quality quantile oracle
        import mpmath
        expect = float(-mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf("0.1") - 1))
        assert gf.q_inv(0.1) == pytest.approx(expect, abs=1e-14)
        assert gf.q_inv(0.1) == pytest.approx(1.2815516, abs=1e-7)

    def test_round_trip_precision(self):
        for p in [1e-8, 1e-4, 0.1, 0.3, 0.5, 0.77, 1 - 1e-6]:
            assert gf.q_func(gf.q_inv(p)) == pytest.approx(p, rel=1e-13)

    def test_domain_errors(self):
        with pytest.raises(ValidationError):
            gf.q_inv(0.0)
        with pytest.raises(ValidationError):
            gf.phi_inv(1.0)


class TestBvn:
    def test_orthant_closed_form(self):
        # P[Z1<=0, Z2<=0] = 1/4 + arcsin(rho)/(2 pi)
        for rho in [-0.8, -0.3, 0.0, 0.5, 0.9, 0.99]:
            expect = 0.25 + math.asin(rho) / (2 * math.pi)
            assert gf.bvn_cdf(0.0, 0.0, rho) == pytest.approx(expect, abs=1e-11)

    def test_rho_half_third(self):
        assert gf.bvn_cdf(0.0, 0.0, 0.5) == pytest.approx(1 / 3, abs=1e-9)

    def test_independence(self):
        h, k = 0.7, -0.4
        assert gf.bvn_cdf(h, k, 0.0) == pytest.approx(
            float(gf.phi(h) * gf.phi(k)), abs=1e-14)

    def test_degenerate(self):
        assert gf.bvn_cdf(0.3, 0.8, 1.0) == pytest.approx(float(gf.phi(0.3)))


class TestMvn:
    def test_identity_orthant(self):
        assert gf.mvn_cdf(np.eye(2), [0, 0])[0] == pytest.approx(0.25, abs=1e-10)
        assert gf.mvn_cdf(np.eye(3), [0, 0, 0])[0] == pytest.approx(0.125, abs=1e-8)

    def test_monotone_in_coordinates(self):
        V = np.array([[1.0, 0.4, 0.2], [0.4, 1.5, 0.3], [0.2, 0.3, 0.8]])
        prev = -1.0
        for z3 in np.linspace(-2, 2, 9):
            val, _ = gf.mvn_cdf(V, [0.5, 0.3, z3])
            assert val >= prev - 1e-12
            prev = val

    def test_trivariate_vs_mc(self):
        rng = np.random.default_rng(11)
        for _ in range(4):
            A = rng.normal(size=(3, 3))
            V = A @ A.T + 0.2 * np.eye(3)
            z = rng.normal(size=3) * np.sqrt(np.diag(V))
            val, _ = gf.mvn_cdf(V, z)
            L = np.linalg.cholesky(V)
            N = 2_000_000
            x = rng.standard_normal((N, 3)) @ L.T
            mc = np.all(x <= z, axis=1).mean()
            se = math.sqrt(max(mc * (1 - mc), 1e-12) / N)
            assert abs(val - mc) <= 4 * se + 1e-6

    def test_singular_sum_structure(self):
        v1, v2 = 0.5, 1.2
        V = np.array([[v1, 0, v1], [0, v2, v2], [v1, v2, v1 + v2]])
        z = np.array([0.6, 0.9, 1.0])
        val, err = gf.mvn_cdf(V, z)
        # direct 2-D integration with the linear constraint
        from scipy.integrate import quad
        f = lambda u: (gf.phi_pdf(u / math.sqrt(v1)) / math.sqrt(v1)
                       * gf.phi(min(z[1], z[2] - u) / math.sqrt(v2)))
        direct, _ = quad(f, -10 * math.sqrt(v1), z[0], limit=200)
        assert val == pytest.approx(direct, abs=1e-7)

    def test_zero_variance_coordinates(self):
        V = np.diag([0.0, 1.0, 2.0])
        assert gf.mvn_cdf(V, [-0.1, 5, 5])[0] == 0.0
        assert gf.mvn_cdf(V, [0.0, 0.0, 0.0])[0] == pytest.approx(0.25, abs=1e-12)

    def test_full_correlation_pair(self):
        V = np.array([[1.0, 1.0], [1.0, 1.0]])
        r = gf.q_inv(0.19)
        assert gf.mvn_cdf(V, [r, r])[0] == pytest.approx(0.81, abs=1e-12)

    def test_qmc_deterministic_and_accurate(self):
        V = np.eye(5)
        z = np.array([0.3, -0.2, 0.8, 0.0, 1.1])
        v1, se1 = gf.mvn_cdf(V, z, seed=3)
        v2, se2 = gf.mvn_cdf(V, z, seed=3)
        assert v1 == v2
        exact = float(np.prod(gf.phi(z)))
        assert abs(v1 - exact) <= max(4 * se1, 1e-6)

    def test_dimension_cap(self):
        with pytest.raises(ValidationError):
            gf.mvn_cdf(np.eye(8), np.zeros(8))


class TestQinv:
    def test_scalar_boundary(self):
        qs = gf.qinv_boundary(np.array([[2.0]]), 0.1)
        assert qs.boundary[0] == pytest.approx(math.sqrt(2.0) * gf.q_inv(0.1),
                                               abs=1e-8)

    def test_full_correlation_ray(self):
        # V = [[1,1],[1,1]]: on the symmetric ray the boundary is Qinv(eps)
        qs = gf.qinv_boundary(np.array([[1.0, 1.0], [1.0, 1.0]]), 0.19,
                              grid=np.array([[gf.q_inv(0.19)]]))
        assert qs.boundary[0] == pytest.approx(gf.q_inv(0.19), abs=1e-6)

    def test_identity_symmetric_ray(self):
        # Phi(r)^2 = 0.81 at eps = 0.19 => r = Qinv(0.1)
        target = gf.q_inv(0.1)
        qs = gf.qinv_boundary(np.eye(2), 0.19, grid=np.array([[target]]))
        assert qs.boundary[0] == pytest.approx(target, abs=1e-6)

    def test_asymptote(self):
        V = np.array([[1.0, 0.3], [0.3, 2.0]])
        eps = 0.1
        qs = gf.qinv_boundary(V, eps, grid=np.array([[25.0]]))
        assert qs.boundary[0] == pytest.approx(
            math.sqrt(2.0) * gf.q_inv(eps), abs=1e-4)

    def test_nesting_in_eps(self):
        V = np.array([[1.0, 0.5], [0.5, 1.0]])
        grid = np.linspace(0.0, 3.0, 7)[:, None]
        b_tight = gf.qinv_boundary(V, 0.05, grid=grid)
        b_loose = gf.qinv_boundary(V, 0.2, grid=grid)
        ok = ~(b_tight.unbounded | b_loose.unbounded)
        assert np.all(b_tight.boundary[ok] >= b_loose.boundary[ok] - 1e-9)

    def test_boundary_samples_hit_level(self):
        V = np.array([[1.0, 0.2], [0.2, 0.7]])
        eps = 0.13
        grid = np.linspace(-0.5, 2.5, 5)[:, None]
        qs = gf.qinv_boundary(V, eps, grid=grid, tol=1e-10)
        for g, b, u in zip(qs.grid, qs.boundary, qs.unbounded):
            if not u:
                val, _ = gf.mvn_cdf(V, np.append(g, b))
                assert abs(val - (1 - eps)) <= 1e-7


class TestQinvShift:
    def test_delta_zero(self):
        assert gf.qinv_shift_check(np.eye(2), 0.1, 0.0) == 0.0

    def test_scalar_mean_value(self):
        v, eps, delta = 2.0, 0.1, 0.01
        D = gf.qinv_shift_check(np.array([[v]]), eps, delta)
        exact = math.sqrt(v) * (gf.q_inv(eps - delta) - gf.q_inv(eps)) / delta
        assert D == pytest.approx(exact, rel=1e-9)
        mean_value_bound = math.sqrt(v) / gf.phi_pdf(gf.q_inv(eps - delta))
        assert math.sqrt(v) / gf.phi_pdf(gf.q_inv(eps)) <= D <= mean_value_bound

    def test_identity_2d_finite(self):
        D = gf.qinv_shift_check(np.eye(2), 0.1, 0.01, n_rays=8, d_grid=40)
        assert 0.0 < D < 50.0


class TestTailConstants:
    def test_be_bound(self):
        assert gf.be_bound(1.0, 0.0, 50, 0.4690) == 0.0
        assert gf.be_bound(1.0, 1.0, 100, 0.4690) == pytest.approx(0.04690)
        with pytest.raises(ZeroDispersionError):
            gf.be_bound(0.0, 1.0, 10, 0.4690)

    def test_lemma47(self):
        v = gf.lemma47_bound(1.0, 1.0, 100, 0.0, 0.4690)
        expect = 2 * (math.log(2) / math.sqrt(2 * math.pi) + 2 * 0.4690) / 10
        assert v == pytest.approx(expect)
        assert gf.lemma47_bound(1.0, 1.0, 100, 50.0, 0.4690) < 1e-20
