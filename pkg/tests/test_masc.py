import itertools
import math

import numpy as np
import pytest

from fbsc.masc import (JointRcuEngine, MascHanEngine, MascHtEngine,
                       masc_exhaustive_oracle, masc_rcu, pair_table)
from fbsc.p2p import P2PEngine, invert_rate
from fbsc.probcore import JointPmf, fig4_pair_source
from fbsc.typetable import StatSpec, build

LN2 = math.log(2.0)


def _brute_masc_rcu(pmf, n, M1, M2):
    grid = pmf.grid
    p1 = grid.sum(axis=1)
    p2 = grid.sum(axis=0)
    seqs = list(itertools.product(range(2), repeat=n))

    def pj(x1, x2):
        return math.prod(grid[a, b] for a, b in zip(x1, x2))

    def pm(x, marg):
        return math.prod(marg[a] for a in x)

    total = 0.0
    for x1 in seqs:
        for x2 in seqs:
            p = pj(x1, x2)
            if p == 0:
                continue
            i1 = -math.log(p / pm(x2, p2))
            i2 = -math.log(p / pm(x1, p1))
            i12 = -math.log(p)
            N1 = sum(1 for xb in seqs if pj(xb, x2) > 0
                     and -math.log(pj(xb, x2) / pm(x2, p2)) <= i1 + 1e-12)
            N2 = sum(1 for xb in seqs if pj(x1, xb) > 0
                     and -math.log(pj(x1, xb) / pm(x1, p1)) <= i2 + 1e-12)
            N12 = sum(1 for xa in seqs for xb in seqs if pj(xa, xb) > 0
                      and -math.log(pj(xa, xb)) <= i12 + 1e-12)
            total += p * min(1.0, N1 / M1 + N2 / M2 + N12 / (M1 * M2))
    return total


class TestMascRcu:
    def test_uniform_independent_pair(self):
        u = JointPmf.from_masses((2, 2), ["1/4"] * 4)
        eng = JointRcuEngine(u, 2)
        # every term saturates: bound = 1 (tie-inclusive counting)
        assert masc_rcu(eng, math.log(4), math.log(4)) == pytest.approx(1.0)
        # n=1 intermediates of the worked example: N1=2, N2=2, N12=4 per type
        eng1 = JointRcuEngine(u, 1)
        counts = np.exp(eng1.logN)
        assert np.allclose(counts[0], 2.0) and np.allclose(counts[1], 2.0)
        assert np.allclose(counts[2], 4.0)

    def test_vanishes_at_large_M(self, fig4):
        eng = JointRcuEngine(fig4, 4)
        assert masc_rcu(eng, 40.0, 40.0) < 1e-10

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_matches_exhaustive(self, fig4, n):
        eng = JointRcuEngine(fig4, n)
        for (M1, M2) in [(2, 2), (8, 8), (3, 5)]:
            a = masc_rcu(eng, math.log(M1), math.log(M2))
            b = _brute_masc_rcu(fig4, n, M1, M2)
            assert a == pytest.approx(min(1.0, b), abs=1e-10)

    def test_deterministic_x2_degenerates_to_p2p(self):
        det = JointPmf.from_masses((2, 2), ["2/3", "0", "1/3", "0"])
        n = 6
        ej = JointRcuEngine(det, n)
        m1 = JointPmf.from_masses((2,), ["2/3", "1/3"])
        ep = P2PEngine(build(m1, n, [StatSpec("i", (0,))]))
        for M1 in [4, 16, 50]:
            masc_val = ej.bound([math.log(M1), 60.0, math.log(M1) + 60.0])
            assert abs(masc_val - ep.rcu_bound(math.log(M1))) <= 1e-12


class TestHanBounds:
    def test_converse_zero_at_full_rate_uniform(self):
        u = JointPmf.from_masses((2, 2), ["1/4"] * 4)
        eng = MascHanEngine(u, 3)
        v, _ = eng.converse(3 * LN2, 3 * LN2)
        assert v == 0.0

    def test_jump_scan_beats_dense_grid(self, fig4):
        n = 6
        eng = MascHanEngine(fig4, n)
        tbl = eng.table
        w_of = lambda lm1, lm2: np.maximum.reduce(
            [eng.i1 - lm1, eng.i2 - lm2, eng.i12 - lm1 - lm2])
        for (M1, M2) in [(8, 8), (16, 4)]:
            lm1, lm2 = math.log(M1), math.log(M2)
            w = w_of(lm1, lm2)
            p = np.exp(eng.log_prob)
            grid = np.linspace(1e-6, 25, 4000)
            dense_conv = max(0.0, max(
                (p * (w >= g)).sum() - 3 * math.exp(-g) for g in grid))
            dense_ach = min(min(
                (p * (w >= -g)).sum() + 3 * math.exp(-g) for g in grid), 1.0)
            cv, _ = eng.converse(lm1, lm2)
            av, _ = eng.achievability(lm1, lm2)
            assert cv >= dense_conv - 1e-9
            assert av <= dense_ach + 1e-9

    def test_achievability_weaker_than_rcu(self, fig4):
        # Han's achievability never beats the RCU bound on symmetric sweeps
        for n in [8, 16]:
            tbl = pair_table(fig4, n)
            han = MascHanEngine(fig4, n, table=tbl)
            rcu = JointRcuEngine(fig4, n)
            for lm_sum in np.linspace(0.5, n * math.log(4) - 0.1, 15):
                ha, _ = han.achievability(lm_sum / 2, lm_sum / 2)
                rv = masc_rcu(rcu, lm_sum / 2, lm_sum / 2)
                assert ha >= rv - 1e-9


class TestHtConverse:
    def test_recovers_han_substitution(self, fig4):
        # at tau_j = log M_j + gamma the threshold form equals Han's value
        n = 5
        eng = MascHtEngine(fig4, n)
        han = MascHanEngine(fig4, n, table=eng.table)
        for (M1, M2) in [(4, 4), (8, 2)]:
            lm1, lm2 = math.log(M1), math.log(M2)
            hv, g = han.converse(lm1, lm2)
            taus = np.array([lm1 + g, lm2 + g, lm1 + lm2 + g])
            got = eng._threshold_value(taus, np.array([lm1, lm2, lm1 + lm2]))
            assert got == pytest.approx(hv, abs=1e-12)

    def test_dominates_han_everywhere(self, fig4):
        for n in [1, 2, 4]:
            eng = MascHtEngine(fig4, n)
            han = MascHanEngine(fig4, n, table=eng.table)
            for M1 in [1, 2, 4]:
                for M2 in [1, 2, 4]:
                    lm1, lm2 = math.log(M1), math.log(M2)
                    hv, _ = han.converse(lm1, lm2)
                    ht = eng.converse(lm1, lm2, restarts=1)
                    assert ht.value >= hv - 1e-9

    def test_sandwich_and_strictness(self, fig4):
        strict = 0
        for n in [1, 2]:
            rcu = JointRcuEngine(fig4, n)
            han = MascHanEngine(fig4, n)
            ht = MascHtEngine(fig4, n)
            for M1 in [1, 2, 3, 4]:
                for M2 in [1, 2, 3, 4]:
                    lm1, lm2 = math.log(M1), math.log(M2)
                    rv = masc_rcu(rcu, lm1, lm2)
                    ha, _ = han.achievability(lm1, lm2)
                    hc, _ = han.converse(lm1, lm2)
                    htv = ht.converse(lm1, lm2, restarts=2)
                    es = masc_exhaustive_oracle(fig4, n, M1, M2)
                    assert hc <= htv.value + 1e-9
                    assert htv.value <= es + 2e-6
                    assert es <= rv + 1e-9
                    assert rv <= ha + 1e-9
                    if htv.value > hc + 1e-9:
                        strict += 1
        assert strict >= 1

    def test_certificate_inversion_ordering(self, fig4):
        n = 24
        tbl = pair_table(fig4, n)
        ht = MascHtEngine(fig4, n, table=tbl)
        han = MascHanEngine(fig4, n, table=tbl)
        ep = P2PEngine(build(fig4, n, [StatSpec("i", (0, 1))]))
        for eps in [0.1, 0.01]:
            r_p2p = ep.log_m_star(eps) / n
            r_han = invert_rate(lambda lm: han.converse(lm / 2, lm / 2)[0],
                                n, eps, n * math.log(4))
            r_ht = ht.invert_symmetric(eps, n * math.log(4),
                                       log_m_lo=max(r_p2p, r_han) * n)
            assert r_ht >= r_p2p - 1e-9
            assert r_ht >= r_han - 1e-9


class TestExhaustiveOracle:
    def test_fig4_n1_values(self, fig4):
        assert masc_exhaustive_oracle(fig4, 1, 1, 1) == pytest.approx(0.5)
        assert masc_exhaustive_oracle(fig4, 1, 2, 2) == pytest.approx(0.0)
        assert masc_exhaustive_oracle(fig4, 1, 2, 1) == pytest.approx(1 / 3)

    def test_budget(self, fig4):
        from fbsc.errors import SizingError
        with pytest.raises(SizingError):
            masc_exhaustive_oracle(fig4, 2, 4, 4, budget=10)

    def test_monotone_in_M(self, fig4):
        vals = [masc_exhaustive_oracle(fig4, 1, m1, 2) for m1 in [1, 2, 3]]
        assert vals[0] >= vals[1] >= vals[2]
