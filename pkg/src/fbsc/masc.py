"""Slepian-Wolf (multiple access) finite-blocklength bounds.

Everything here evaluates exactly on the joint type table: the two-encoder
RCU bound, Han's achievability and converse (via the max-statistic W), the
composite hypothesis-testing converse with the canonical counting/product
measures, and a tiny-instance exhaustive oracle that enumerates every
deterministic encoder pair.

The RCU engine generalizes to any K <= 3 encoders (it also powers the
random-access bound): for each nonempty subset S of active encoders it needs
the exact count of competing subsequences that are conditionally no more
probable, which is a function of the conditioning block only through its
composition.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._util import logsumexp
from .cht import maximize_variational
from .errors import SizingError, ValidationError
from .probcore import JointPmf, subset_order
from .typetable import (
    DEFAULT_ROW_BUDGET,
    CondCounting,
    StatSpec,
    build,
    build_cached,
    canonical_contract,
)

NEG_INF = -math.inf


# --------------------------------------------------------------------------
# generalized RCU engine (K encoders, K <= 3)
# --------------------------------------------------------------------------

class JointRcuEngine:
    """Exact evaluator of the K-encoder RCU bound on one type table.

    Per row (joint type) and per nonempty subset S of encoders, ``logN[j]``
    is the log-count of sequences x-bar_S that are conditionally no more
    probable than the row's own subsequence given its conditioning block,
    inclusive of the row itself.  The bound for code sizes (log M_S) is then
    E[min{1, sum_S N_S / M_S}].
    """

    def __init__(self, pmf: JointPmf, n: int,
                 row_budget: int = DEFAULT_ROW_BUDGET):
        self.pmf = pmf
        self.n = n
        K = pmf.K
        self.subsets = subset_order(K)
        specs = [
            StatSpec(f"s{j}", sub, tuple(i for i in range(K) if i not in sub))
            for j, sub in enumerate(self.subsets)
        ]
        self.table = build(pmf, n, specs, row_budget)
        self.log_prob = self.table.log_prob
        self.logN = np.stack([
            self._subset_log_counts(j) for j in range(len(self.subsets))
        ])

    def _subset_log_counts(self, j: int) -> np.ndarray:
        sub = self.subsets[j]
        comp = tuple(i for i in range(self.pmf.K) if i not in sub)
        table = self.table
        if not comp:
            # joint coordinate: inclusive rank of the row in the global
            # counting measure of its own statistic
            vals = table.stat[f"s{j}"]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            cum = np.logaddexp.accumulate(table.log_mult[order])
            grp_end = np.searchsorted(sv, sv, side="right") - 1
            out = np.empty(vals.size)
            out[order] = cum[grp_end]
            return out
        cc = CondCounting(self.pmf, sub, comp)
        # per-row conditioning composition and per-(cond letter, group) counts
        rows = table.rows
        n_b = len(cc.cond_letters)
        cond_ind = np.zeros((len(table.support), n_b))
        key_ind = np.zeros((len(table.support), cc.n_columns))
        b_index = {b: i for i, b in enumerate(cc.cond_letters)}
        for a, letter in enumerate(table.support):
            b = tuple(letter[i] for i in comp)
            t = tuple(letter[i] for i in sub)
            bi = b_index[b]
            cond_ind[a, bi] = 1.0
            b_idx, g = cc.group_of[(b, t)]
            key_ind[a, cc.column(b_idx, g)] = 1.0
        comps_f = table.comps.astype(float)
        cond_counts = np.ascontiguousarray((comps_f @ cond_ind).astype(np.int64))
        kmat_rows = comps_f @ key_ind
        row_vals = canonical_contract(kmat_rows, cc.weight_vector())
        uniq, inv = np.unique(cond_counts, axis=0, return_inverse=True)
        out = np.empty(rows)
        for u in range(uniq.shape[0]):
            _, avals, logc = cc.atoms_for(tuple(uniq[u]))
            order = np.argsort(avals, kind="stable")
            sv = avals[order]
            cum = np.logaddexp.accumulate(logc[order])
            sel = inv == u
            pos = np.searchsorted(sv, row_vals[sel], side="right") - 1
            if np.any(pos < 0):
                raise ValidationError("row's own atom missing from conditional count")
            out[sel] = cum[pos]
        return out

    def bound(self, log_M_by_subset) -> float:
        """E[min{1, sum over subsets of N_S exp(-log M_S)}]."""
        log_M = np.asarray(log_M_by_subset, dtype=float)
        if log_M.size != len(self.subsets):
            raise ValidationError("need one log code size per nonempty subset")
        log_sum = logsumexp(self.logN - log_M[:, None], axis=0)
        return min(1.0, float(math.exp(
            logsumexp(self.log_prob + np.minimum(0.0, log_sum)))))


def masc_rcu(engine: JointRcuEngine, log_M1: float, log_M2: float) -> float:
    """Two-encoder RCU bound at code sizes (M1, M2)."""
    if engine.pmf.K != 2:
        raise ValidationError("masc_rcu needs a two-source engine")
    return engine.bound([log_M1, log_M2, log_M1 + log_M2])


# --------------------------------------------------------------------------
# Han bounds on the max statistic W
# --------------------------------------------------------------------------

def _pair_info_arrays(table):
    """(i1, i2, i12) arrays from a pair table, whichever naming it carries."""
    if "i1" in table.stat:
        return table.stat["i1"], table.stat["i2"], table.stat["i12"]
    return table.stat["s0"], table.stat["s1"], table.stat["s2"]


def pair_table(pmf: JointPmf, n: int, row_budget: int = DEFAULT_ROW_BUDGET):
    """One shared type table carrying all three pair information densities."""
    specs = [StatSpec("i1", (0,), (1,)), StatSpec("i2", (1,), (0,)),
             StatSpec("i12", (0, 1))]
    return build_cached(pmf, n, specs, row_budget)


class MascHanEngine:
    """Jump-point optimizers for Han's bounds on a two-source type table."""

    def __init__(self, pmf: JointPmf, n: int,
                 row_budget: int = DEFAULT_ROW_BUDGET, table=None):
        if pmf.K != 2:
            raise ValidationError("need a two-source pmf")
        self.pmf = pmf
        self.n = n
        self.table = table if table is not None else pair_table(pmf, n, row_budget)
        self.i1, self.i2, self.i12 = _pair_info_arrays(self.table)
        self.log_prob = self.table.log_prob

    def _w_measure(self, log_M1: float, log_M2: float):
        w = np.maximum.reduce([
            self.i1 - log_M1, self.i2 - log_M2, self.i12 - log_M1 - log_M2])
        order = np.argsort(w, kind="stable")
        sw = w[order]
        sfx = np.logaddexp.accumulate(self.log_prob[order][::-1])[::-1]
        starts = np.searchsorted(sw, sw, side="left")
        ends = np.searchsorted(sw, sw, side="right")
        return sw, sfx, starts, ends

    def achievability(self, log_M1: float, log_M2: float) -> tuple[float, float]:
        """inf over gamma > 0 of P[W >= -gamma] + 3 e^-gamma."""
        sw, sfx, starts, ends = self._w_measure(log_M1, log_M2)
        best_v, best_g = 1.0, math.inf
        neg = sw < 0.0  # gamma = -w > 0
        if np.any(neg):
            idx = np.nonzero(neg)[0]
            nxt = ends[idx]
            tail_above = np.where(nxt >= sw.size, -np.inf,
                                  sfx[np.minimum(nxt, sw.size - 1)])
            vals = np.exp(tail_above) + 3.0 * np.exp(sw[idx])
            k = int(np.argmin(vals))
            if vals[k] < best_v:
                best_v, best_g = float(vals[k]), float(-sw[idx[k]])
        return min(1.0, best_v), best_g

    def converse(self, log_M1: float, log_M2: float) -> tuple[float, float]:
        """max over gamma > 0 of P[W >= gamma] - 3 e^-gamma, clamped."""
        sw, sfx, starts, ends = self._w_measure(log_M1, log_M2)
        best_v, best_g = 0.0, 1.0
        pos = sw > 0.0  # gamma = w
        if np.any(pos):
            idx = np.nonzero(pos)[0]
            vals = np.exp(sfx[starts[idx]]) - 3.0 * np.exp(-sw[idx])
            k = int(np.argmax(vals))
            if vals[k] > best_v:
                best_v, best_g = float(vals[k]), float(sw[idx[k]])
        return min(1.0, best_v), best_g


# --------------------------------------------------------------------------
# hypothesis-testing converse with canonical measures
# --------------------------------------------------------------------------

@dataclass
class HtResult:
    value: float                  # clamped to [0,1]
    raw_value: float
    provenance: str               # "variational" | "threshold"
    variational_raw: float
    threshold_raw: float
    log_gammas: np.ndarray | None
    taus: np.ndarray | None


class MascHtEngine:
    """Converse from composite HT against U P2, P1 U, U (n-fold products).

    Evaluates two lower bounds on the error of any (M1, M2) code and keeps
    the larger: the variational form sup_gamma {sum min{P, sum gamma_j Q_j}
    - gamma_1 M_1 - gamma_2 M_2 - gamma_3 M_1 M_2} restricted to the
    canonical measures, and the cheaper threshold (linear-certificate) form
    sup_tau P[union_j {i_j >= tau_j}] - sum_j M_j e^{-tau_j}.  Seeding the
    variational optimizer with the optimized Han point and the exact
    single-measure Neyman-Pearson points guarantees it dominates both Han's
    converse and the joint-source exact converse.
    """

    def __init__(self, pmf: JointPmf, n: int,
                 row_budget: int = DEFAULT_ROW_BUDGET, table=None):
        if pmf.K != 2:
            raise ValidationError("need a two-source pmf")
        self.pmf = pmf
        self.n = n
        self.table = table if table is not None else pair_table(pmf, n, row_budget)
        t = self.table
        self.i = np.stack(_pair_info_arrays(t))
        self.log_prob = t.log_prob
        self.log_mult = t.log_mult
        self.log_pseq = t.log_pseq
        # per-sequence canonical measure masses: q1 = P2(x2^n), q2 = P1(x1^n), q3 = 1
        p1 = pmf.marginal((0,))
        p2 = pmf.marginal((1,))
        lnq1_letter = np.array([math.log(p2.p((a[1],))) for a in t.support])
        lnq2_letter = np.array([math.log(p1.p((a[0],))) for a in t.support])
        comps_f = t.comps.astype(float)
        self.log_q = np.stack([
            comps_f @ lnq1_letter,
            comps_f @ lnq2_letter,
            np.zeros(t.rows),
        ])
        # sorted views per coordinate for the threshold form
        self._orders = [np.argsort(self.i[j], kind="stable") for j in range(3)]

    # ------------------------------------------------------- threshold form
    def _threshold_value(self, taus: np.ndarray, log_Ms: np.ndarray) -> float:
        union = (self.i[0] >= taus[0]) | (self.i[1] >= taus[1]) | (self.i[2] >= taus[2])
        p_union = math.exp(logsumexp(self.log_prob[union])) if union.any() else 0.0
        return p_union - float(np.exp(log_Ms - taus).sum())

    def _threshold_coord_pass(self, taus: np.ndarray, log_Ms: np.ndarray,
                              j: int) -> tuple[float, float]:
        others = [m for m in range(3) if m != j]
        rest = np.zeros(self.i.shape[1], dtype=bool)
        for m in others:
            rest |= self.i[m] >= taus[m]
        p_rest = math.exp(logsumexp(self.log_prob[rest])) if rest.any() else 0.0
        pen_others = float(np.exp(log_Ms[others] - taus[others]).sum())
        free = ~rest
        order = self._orders[j]
        sel = order[free[order]]
        vals = self.i[j][sel]
        if vals.size:
            sfx = np.logaddexp.accumulate(self.log_prob[sel][::-1])[::-1]
            starts = np.searchsorted(vals, vals, side="left")
            cand = np.exp(sfx[starts]) - np.exp(log_Ms[j] - vals)
            k = int(np.argmax(cand))
            best_tau, best_val = float(vals[k]), float(cand[k])
        else:
            best_tau, best_val = math.inf, 0.0
        # tau_j -> +inf drops the j-th event and its penalty entirely
        if 0.0 >= best_val:
            best_tau, best_val = math.inf, 0.0
        return best_tau, p_rest + best_val - pen_others

    def threshold_converse(self, log_M1: float, log_M2: float,
                           seed_taus=None, passes: int = 4) -> tuple[float, np.ndarray]:
        log_Ms = np.array([log_M1, log_M2, log_M1 + log_M2])
        # seed: Han substitution tau_j = log M_j + gamma at the Han-optimal gamma
        if seed_taus is None:
            w = np.maximum.reduce([self.i[j] - log_Ms[j] for j in range(3)])
            order = np.argsort(w, kind="stable")
            sw = w[order]
            sfx = np.logaddexp.accumulate(self.log_prob[order][::-1])[::-1]
            gstart = np.searchsorted(sw, sw, side="left")
            pos = sw > 0
            if np.any(pos):
                idx = np.nonzero(pos)[0]
                vals = np.exp(sfx[gstart[idx]]) - 3.0 * np.exp(-sw[idx])
                g = float(sw[idx[int(np.argmax(vals))]])
            else:
                g = 1.0
            seed_taus = log_Ms + g
        taus = np.asarray(seed_taus, dtype=float).copy()
        best = self._threshold_value(taus, log_Ms)
        for _ in range(passes):
            improved = False
            for j in range(3):
                tau_j, val = self._threshold_coord_pass(taus, log_Ms, j)
                if val > best + 1e-15:
                    taus[j] = tau_j
                    best = val
                    improved = True
            if not improved:
                break
        return best, taus

    # ------------------------------------------------------ variational form
    def variational_converse(self, log_M1: float, log_M2: float,
                             restarts: int = 2, rng_seed: int = 0,
                             sg_steps: int = 60, extra_seeds=()):
        log_Ms = np.array([log_M1, log_M2, log_M1 + log_M2])
        seeds = []
        # exact single-measure Neyman-Pearson points (gamma_j alone)
        from .cht import _coordinate_exact_max
        for j in range(3):
            lg = np.full(3, NEG_INF)
            lg[j] = _coordinate_exact_max(self.log_mult, self.log_pseq,
                                          self.log_q, lg, log_Ms, j)
            seeds.append(lg)
        # Han point: gamma_j = e^-g / M_j
        _, taus = self.threshold_converse(log_M1, log_M2, passes=1)
        seeds.append(-np.asarray(taus))
        seeds.extend(np.asarray(s, float) for s in extra_seeds)
        return maximize_variational(self.log_mult, self.log_pseq, self.log_q,
                                    log_Ms, seeds=seeds, restarts=restarts,
                                    rng_seed=rng_seed, sg_steps=sg_steps)

    def converse(self, log_M1: float, log_M2: float, restarts: int = 2,
                 rng_seed: int = 0, extra_seeds=()) -> HtResult:
        thr_val, taus = self.threshold_converse(log_M1, log_M2)
        var = self.variational_converse(log_M1, log_M2, restarts=restarts,
                                        rng_seed=rng_seed,
                                        extra_seeds=list(extra_seeds) + [-taus])
        raw = max(thr_val, var.raw_value)
        prov = "variational" if var.raw_value >= thr_val else "threshold"
        return HtResult(
            value=min(1.0, max(0.0, raw)),
            raw_value=raw,
            provenance=prov,
            variational_raw=var.raw_value,
            threshold_raw=thr_val,
            log_gammas=var.log_gammas,
            taus=taus,
        )

    # --------------------------------------------------- certificate reuse
    def _gamma_head(self, log_gammas: np.ndarray) -> float:
        with np.errstate(invalid="ignore"):
            shifted = np.asarray(log_gammas, float)[:, None] + self.log_q
        mix = logsumexp(shifted, axis=0)
        return float(math.exp(logsumexp(
            self.log_mult + np.minimum(self.log_pseq, mix))))

    def _tau_head(self, taus: np.ndarray) -> float:
        union = ((self.i[0] >= taus[0]) | (self.i[1] >= taus[1])
                 | (self.i[2] >= taus[2]))
        return math.exp(logsumexp(self.log_prob[union])) if union.any() else 0.0

    def invert_symmetric(self, eps: float, ln_max: float,
                         rate_tol: float = 1e-6, rng_seed: int = 0,
                         max_rounds: int = 40, log_m_lo: float = 0.0) -> float:
        """Minimal symmetric sum rate with the HT converse at or below eps.

        Every optimized gamma (and threshold tau) is a certificate whose
        value at any other code size costs O(1): the head term of the
        variational objective does not involve M, only the linear penalty
        does.  The inversion bisects over the max of the collected
        certificates and re-optimizes at the crossing until it stops moving,
        so each round only adds certificates (the bound can only tighten and
        the crossing only move up).
        """
        from .cht import _coordinate_exact_max
        from .p2p import invert_rate

        n = self.n
        gammas: list[tuple[np.ndarray, float]] = []   # (log_gamma, head)
        taus_set: list[tuple[np.ndarray, float]] = [] # (tau, union prob)

        def cert_bound(lm: float) -> float:
            l1 = l2 = lm / 2.0
            best = 0.0
            for lg, head in gammas:
                pen = float(np.exp(lg + np.array([l1, l2, lm])).sum())
                best = max(best, head - pen)
            for tau, pu in taus_set:
                pen = float(np.exp(np.array([l1, l2, lm]) - tau).sum())
                best = max(best, pu - pen)
            return min(1.0, best)

        def harvest(lm: float) -> float:
            """Optimize at one anchor; keep every seed as a certificate.

            The per-coordinate Neyman-Pearson seeds make the certificate set
            dominate the joint-source exact converse, and the Han
            substitution point makes it dominate Han's converse, at every
            anchor they are harvested for.
            """
            l1 = lm / 2.0
            log_Ms = np.array([l1, l1, lm])
            thr_val, taus = self.threshold_converse(l1, l1)
            taus_set.append((taus.copy(), self._tau_head(taus)))
            seeds = []
            for j in range(3):
                lg = np.full(3, -np.inf)
                lg[j] = _coordinate_exact_max(self.log_mult, self.log_pseq,
                                              self.log_q, lg, log_Ms, j)
                seeds.append(lg)
            seeds.append(-taus)
            var = self.variational_converse(l1, l1, restarts=0,
                                            rng_seed=rng_seed,
                                            extra_seeds=seeds)
            for lg in seeds + [var.log_gammas]:
                gammas.append((np.asarray(lg, float).copy(),
                               self._gamma_head(lg)))
            return max(thr_val, var.raw_value)

        # anchor at the joint-entropy rate point n H(X1, X2)
        lm0 = float(np.exp(self.log_prob) @ self.i[2])
        harvest(min(max(lm0, max(1.0, log_m_lo)), ln_max))
        rate = log_m_lo / n
        for _ in range(max_rounds):
            rate = invert_rate(cert_bound, n, eps, ln_max, rate_tol,
                               log_m_min=log_m_lo)
            lm = rate * n
            before = cert_bound(lm)
            full = harvest(lm)
            if full > eps:
                # certificates at lm now exceed eps: the crossing moved up
                log_m_lo = lm
            if full <= before + 1e-12:
                break
        return rate


# --------------------------------------------------------------------------
# exhaustive tiny-instance oracle
# --------------------------------------------------------------------------

def masc_exhaustive_oracle(pmf: JointPmf, n: int, M1: int, M2: int,
                           budget: int = 10_000_000) -> float:
    """Exact optimal error over all deterministic encoder pairs (n <= 2).

    For each encoder pair the optimal decoder is MAP over the preimage
    product cell; enumeration is over all M1^{|X1|^n} x M2^{|X2|^n} pairs.
    """
    if pmf.K != 2:
        raise ValidationError("oracle needs a two-source pmf")
    s1, s2 = pmf.alphabet_sizes
    S1, S2 = s1 ** n, s2 ** n
    n_pairs = (M1 ** S1) * (M2 ** S2)
    if n_pairs > budget:
        raise SizingError(f"{n_pairs} encoder pairs exceed budget {budget}",
                          required=n_pairs, budget=budget)
    # n-fold joint probabilities as an (S1, S2) matrix
    grid = pmf.grid
    P = np.zeros((S1, S2))
    for i, x1 in enumerate(itertools.product(range(s1), repeat=n)):
        for j, x2 in enumerate(itertools.product(range(s2), repeat=n)):
            P[i, j] = math.prod(grid[a, b] for a, b in zip(x1, x2))
    f2_list = np.array(list(itertools.product(range(M2), repeat=S2)), dtype=np.int64)
    best_success = 0.0
    for f1 in itertools.product(range(M1), repeat=S1):
        R = np.full((M1, S2), -np.inf)
        for i, c1 in enumerate(f1):
            R[c1] = np.maximum(R[c1], P[i])
        # success(f2) = sum_{c1,c2} max_{j: f2(j)=c2} R[c1, j]
        succ = np.zeros(f2_list.shape[0])
        for c2 in range(M2):
            mask = f2_list == c2            # (V, S2)
            masked = np.where(mask[:, None, :], R[None, :, :], -np.inf)
            m = masked.max(axis=2)          # (V, M1)
            succ += np.where(np.isfinite(m), m, 0.0).sum(axis=1)
        best_success = max(best_success, float(succ.max()))
    return max(0.0, 1.0 - best_success)


__all__ = [
    "JointRcuEngine",
    "MascHanEngine",
    "MascHtEngine",
    "HtResult",
    "masc_rcu",
    "masc_exhaustive_oracle",
]
