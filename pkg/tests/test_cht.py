import itertools
import math

import numpy as np
import pytest

from fbsc import gaussfun as gf
from fbsc.cht import (MeasureFamily, cht_converse_cert, cht_third_order_sets,
                      eps_star_variational, family_moments, lp_eps_star,
                      lr_threshold_test, np_binary_error)
from fbsc.errors import ValidationError, ZeroDispersionError


class TestFamily:
    def test_validation(self):
        with pytest.raises(ValidationError):
            MeasureFamily.from_floats([0.6, 0.3], [[0.5, 0.5]])
        with pytest.raises(ValidationError):
            MeasureFamily.from_floats([0.5, 0.5], [[1.0, 0.0]])

    def test_counting_measures_allowed(self):
        fam = MeasureFamily.from_floats([0.5, 0.5], [[1.0, 1.0]])
        assert fam.k == 1


class TestLrThreshold:
    def test_identical_measures(self):
        fam = MeasureFamily.from_floats([0.5, 0.5], [[0.5, 0.5]])
        alpha, betas = lr_threshold_test(fam, 1, [0.0])  # gamma = 1
        assert alpha == pytest.approx(1.0)
        assert betas[0] == pytest.approx(1.0)

    def test_gamma_zero(self):
        fam = MeasureFamily.from_floats([0.7, 0.3], [[1.0, 1.0]])
        alpha, betas = lr_threshold_test(fam, 2, [-math.inf])
        assert alpha == pytest.approx(1.0)
        assert betas[0] == pytest.approx(4.0)  # total counting mass on support

    def test_matches_exhaustive_n5(self):
        p = [0.7, 0.3]
        q1, q2 = [0.5, 0.5], [0.2, 0.8]
        fam = MeasureFamily.from_floats(p, [q1, q2])
        lg = np.array([math.log(0.8), math.log(1.1)])
        alpha, betas = lr_threshold_test(fam, 5, lg)
        al = 0.0
        be = np.zeros(2)
        for s in itertools.product([0, 1], repeat=5):
            pp = math.prod(p[i] for i in s)
            r1 = pp / math.prod(q1[i] for i in s)
            r2 = pp / math.prod(q2[i] for i in s)
            if math.log(r1) >= lg[0] and math.log(r2) >= lg[1]:
                al += pp
            if math.log(r1) >= lg[0]:
                be[0] += pp / r1
            if math.log(r2) >= lg[1]:
                be[1] += pp / r2
        assert alpha == pytest.approx(al, abs=1e-12)
        assert betas == pytest.approx(be, abs=1e-12)


class TestConverseCert:
    def test_gamma_zero_certifies_one(self):
        fam = MeasureFamily.from_floats([0.6, 0.4], [[0.5, 0.5]])
        assert cht_converse_cert(fam, 3, [-math.inf], [0.5]) == pytest.approx(1.0)

    def test_no_achievable_point_violates(self):
        rng = np.random.default_rng(0)
        p = [0.55, 0.45]
        q = [0.3, 0.7]
        fam = MeasureFamily.from_floats(p, [q])
        for lg in np.linspace(-2, 2, 9):
            alpha, betas = lr_threshold_test(fam, 4, [lg])
            for lg2 in np.linspace(-2, 2, 9):
                cert = cht_converse_cert(fam, 4, [lg2], betas)
                assert alpha <= cert + 1e-12


class TestVariational:
    def test_trivial_points(self):
        fam = MeasureFamily.from_floats([0.5, 0.5], [[0.5, 0.5]])
        assert eps_star_variational(fam, [1.0], restarts=2).value == \
            pytest.approx(0.0, abs=1e-12)
        assert eps_star_variational(fam, [50.0], restarts=2).value == 0.0

    @pytest.mark.parametrize("trial", range(8))
    def test_k1_equals_np(self, trial):
        rng = np.random.default_rng(trial)
        m = int(rng.integers(2, 5))
        p = rng.dirichlet(np.ones(m))
        q = rng.dirichlet(np.ones(m)) + 0.01
        q = q / q.sum()
        beta = float(rng.uniform(0.05, 0.9))
        fam = MeasureFamily.from_floats(p, [q])
        got = eps_star_variational(fam, [beta], rng_seed=trial, restarts=3)
        assert got.value == pytest.approx(np_binary_error(p, q, beta), abs=1e-9)
        assert got.cert_ok

    @pytest.mark.parametrize("trial", range(8))
    def test_k2_equals_lp_vertex_enumeration(self, trial):
        rng = np.random.default_rng(100 + trial)
        m = int(rng.integers(2, 5))
        p = rng.dirichlet(np.ones(m))
        q1 = rng.dirichlet(np.ones(m)) + 0.02
        q1 /= q1.sum()
        q2 = rng.dirichlet(np.ones(m)) + 0.02
        q2 /= q2.sum()
        b = rng.uniform(0.05, 0.8, size=2)
        fam = MeasureFamily.from_floats(p, [q1, q2])
        got = eps_star_variational(fam, b, rng_seed=trial, restarts=3).value
        assert got == pytest.approx(lp_eps_star(p, [q1, q2], b), abs=1e-6)

    def test_achievability_respects_variational(self):
        # achieved alpha never beats 1 - eps* at the achieved betas
        fam = MeasureFamily.from_floats([0.6, 0.4], [[0.5, 0.5], [0.9, 0.1]])
        for lg1 in np.linspace(-1.5, 1.5, 5):
            for lg2 in np.linspace(-1.5, 1.5, 5):
                alpha, betas = lr_threshold_test(fam, 3, [lg1, lg2])
                lower = eps_star_variational(fam, betas, n=3, restarts=2).value
                assert alpha <= 1.0 - lower + 1e-9


class TestThirdOrderSets:
    def test_scalar_reduction(self):
        D = np.array([0.3])
        V = np.array([[0.5]])
        n, eps = 100, 0.1
        sets = cht_third_order_sets(D, V, n, eps)
        z = math.sqrt(0.5) * gf.q_inv(eps)
        expect = -n * 0.3 + math.sqrt(n) * z - 0.5 * math.log(n)
        got = sets.log_beta_boundary(np.array([z]))
        assert got[0] == pytest.approx(expect)
        assert sets.member(np.array([expect + 1e-6]))
        assert not sets.member(np.array([expect - 1e-3]))

    def test_nesting_in_eps(self):
        D = np.array([0.2, 0.4])
        V = np.array([[0.3, 0.1], [0.1, 0.6]])
        tight = cht_third_order_sets(D, V, 50, 0.05)
        loose = cht_third_order_sets(D, V, 50, 0.2)
        qs = gf.qinv_boundary(V, 0.05, grid=np.linspace(-1, 2, 5)[:, None])
        for g, b, u in zip(qs.grid, qs.boundary, qs.unbounded):
            if u:
                continue
            lb = tight.log_beta_boundary(np.append(g, b))
            assert loose.member(lb + 1e-9)

    def test_zero_dispersion_error(self):
        with pytest.raises(ZeroDispersionError):
            cht_third_order_sets(np.array([0.1]), np.array([[0.0]]), 10, 0.1)

    def test_exact_points_track_boundary(self):
        # ln beta achieved by LR tests minus (-nD - ln n / 2) scales like
        # sqrt(n) z* within a fitted O(1) band
        p = [0.6, 0.4]
        q = [0.45, 0.55]
        fam = MeasureFamily.from_floats(p, [q])
        D, V, T = family_moments(fam)
        z_star = math.sqrt(V[0, 0]) * gf.q_inv(0.2)
        offsets = []
        for n in [50, 100, 200, 400]:
            # choose gamma per the Gaussian approximation of the alpha target
            lg = n * D[0] - math.sqrt(n) * z_star
            alpha, betas = lr_threshold_test(fam, n, [lg])
            lb = math.log(betas[0])
            offsets.append(lb - (-n * D[0] - 0.5 * math.log(n))
                           - math.sqrt(n) * z_star)
        spread = max(offsets) - min(offsets)
        assert spread <= 2.0  # O(1) band
