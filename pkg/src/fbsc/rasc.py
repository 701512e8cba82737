"""Random-access source coding: design, random-coding bound, simulator.

A random-access code is one nested code per encoder: every source block is
mapped to m_max code symbols up front, each active-set configuration T is
decoded after m_T of them, and single-bit feedback at the scheduled times in
M_set ends an epoch.  Encoders never learn T, so their output stream is a
function of (codebook, source block) only.

``design`` picks the smallest decoding blocklength m_T whose rate vector
lands inside the third-order region of the active marginal at the target
error (zero-varentropy marginals use their dedicated region families); the
un-computable fourth-order constants of the existence proof are dropped, and
the simulator is the validation authority for the resulting table.

Randomness is split into named substreams per seed (codebook / source /
tie-break / activity) so each can be replayed independently.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import gaussfun as gf
from .errors import InfeasibleError, SizingError, ValidationError
from .masc import JointRcuEngine
from .probcore import InfoMoments, JointPmf, moments, subset_order
from .regions import ZERO_VAR_TOL, third_order_region, zero_var_regions
from .typetable import CondCounting, canonical_contract, composition_count

EXPLICIT_CODEBOOK_CAP = 65536
M_CAP_FACTOR = 64


def _subset_key(T) -> str:
    return ",".join(str(i + 1) for i in sorted(T))


# --------------------------------------------------------------------------
# design
# --------------------------------------------------------------------------

@dataclass
class RascDesign:
    K: int
    n: int
    Q: tuple[int, ...]
    eps_targets: dict[tuple[int, ...], float]
    m: dict[tuple[int, ...], int]           # includes the empty set at 1
    lam: dict[tuple[int, ...], float]
    M_set: tuple[int, ...]                  # sorted distinct decoding times
    rates: dict[tuple[int, ...], tuple[float, ...]]
    assumption_ok: dict[tuple[int, ...], bool]

    @property
    def m_max(self) -> int:
        return max(self.m.values())

    def feedback_bits(self, T: tuple[int, ...]) -> int:
        mt = self.m[tuple(sorted(T))] if T else 1
        return sum(1 for m in self.M_set if m <= mt)

    def lambda_sum_ok(self) -> bool:
        return sum(1.0 / (v + 1.0) for v in self.lam.values()) < 1.0

    def to_json_dict(self) -> dict:
        return {
            "K": self.K,
            "n": self.n,
            "Q": list(self.Q),
            "eps_targets": {_subset_key(t): v for t, v in self.eps_targets.items()},
            "m": {_subset_key(t) if t else "empty": v for t, v in self.m.items()},
            "lambda": {_subset_key(t): v for t, v in self.lam.items()},
            "M_set": list(self.M_set),
            "rates_nats": {_subset_key(t): list(r) for t, r in self.rates.items()},
            "assumption_ok": {_subset_key(t): bool(v)
                              for t, v in self.assumption_ok.items()},
        }


def _membership_fn(marg: JointPmf, mom: InfoMoments, n: int, eps: float,
                   logQ: np.ndarray):
    """Return member(m) for the rate vector of decoding blocklength m."""
    k = marg.K
    subs = subset_order(k)
    qbar = np.array([sum(logQ[list(s)]) for s in subs])
    diag = np.diag(mom.V)
    if np.all(diag > ZERO_VAR_TOL):
        region = third_order_region(mom, n, eps)

        def member(m: int) -> bool:
            rates = m * logQ / n
            return region.member(rates)

        return member
    if k == 1:
        # uniform source: exact region M >= (1-eps) |X|^n
        H = float(mom.H[0])

        def member(m: int) -> bool:
            return m * qbar[0] >= n * H + math.log(1.0 - eps)

        return member
    if k == 2:
        zv = zero_var_regions(marg, n, eps)

        def member(m: int) -> bool:
            r = m * logQ / n
            ex = zv.member_exact(r[0], r[1])
            if ex is not None:
                return ex
            return zv.member_inner(r[0], r[1])

        return member
    raise InfeasibleError(
        "zero-varentropy marginal with 3 active encoders has no region family")


def design(pmf: JointPmf, n: int, Q, eps_targets, lam="default",
           refine: str = "none", refine_row_budget: int = 200_000) -> RascDesign:
    """Choose the decoding-blocklength table and the lambda allocation.

    The base rule is the smallest m whose rate vector enters the
    third-order (or zero-varentropy) region at the target error; the
    fourth-order constants of the existence proof are dropped.  At desk-scale
    blocklengths that rule under-provisions an actual random codebook, so
    ``refine="rcu"`` additionally walks m_T upward until the exact
    random-coding ensemble bound meets the target (skipped for
    zero-varentropy marginals, where random coding is the wrong yardstick
    and the region rule is already exact).
    """
    if refine not in ("none", "rcu"):
        raise ValidationError(f"unknown refine mode {refine!r}")
    K = pmf.K
    if K > 3:
        raise ValidationError("design supports K <= 3")
    Q = tuple(int(q) for q in Q)
    if len(Q) != K or any(q < 2 for q in Q):
        raise ValidationError("need one symbol alphabet size >= 2 per encoder")
    subs = [tuple(s) for s in subset_order(K)]
    if isinstance(eps_targets, (int, float)):
        eps_targets = {s: float(eps_targets) for s in subs}
    else:
        eps_targets = {tuple(sorted(k)): float(v) for k, v in eps_targets.items()}
    if set(eps_targets) != set(subs):
        raise ValidationError("eps_targets must cover every nonempty subset")
    if any(not 0.0 < v < 1.0 for v in eps_targets.values()):
        raise ValidationError("error targets must lie in (0,1)")
    default_lam = 2.0 * (2 ** K - 1)
    if lam == "default":
        lam_map = {s: default_lam for s in subs}
    elif isinstance(lam, (int, float)):
        lam_map = {s: float(lam) for s in subs}
    else:
        lam_map = {tuple(sorted(k)): float(v) for k, v in lam.items()}
    if sum(1.0 / (v + 1.0) for v in lam_map.values()) >= 1.0:
        raise ValidationError("lambda allocation violates sum 1/(lambda+1) < 1")

    logQ_full = np.log(np.array(Q, dtype=float))
    m_table: dict[tuple[int, ...], int] = {(): 1}
    rates: dict[tuple[int, ...], tuple[float, ...]] = {}
    assumption_ok: dict[tuple[int, ...], bool] = {}
    cap = M_CAP_FACTOR * n
    for T in subs:
        marg = pmf.marginal(T) if len(T) < K else pmf
        mom = moments(marg)
        assumption_ok[T] = bool(np.all(mom.EVc > ZERO_VAR_TOL))
        logQ = logQ_full[list(T)]
        member = _membership_fn(marg, mom, n, eps_targets[T], logQ)
        if not member(cap):
            raise InfeasibleError(
                f"target eps={eps_targets[T]} unreachable for T={T} within m <= {cap}")
        qbar_T = float(logQ.sum())
        floor = max(1, math.ceil(n * float(mom.H[-1]) / qbar_T))
        lo, hi = 1, cap
        if member(floor):
            hi = floor
        else:
            lo = floor + 1
        while lo < hi:
            mid = (lo + hi) // 2
            if member(mid):
                hi = mid
            else:
                lo = mid + 1
        m_T = lo
        if (refine == "rcu"
                and bool(np.all(np.diag(mom.V) > ZERO_VAR_TOL))
                and composition_count(n, sum(1 for p in marg.mass if p > 0))
                <= refine_row_budget):
            eng = JointRcuEngine(marg, n, row_budget=refine_row_budget)
            subs_T = subset_order(len(T))

            def ens_bound(m):
                log_Ms = np.array([m * float(logQ[list(s)].sum()) for s in subs_T])
                return eng.bound(log_Ms)

            while m_T < cap and ens_bound(m_T) > eps_targets[T]:
                m_T += 1
            if m_T >= cap:
                raise InfeasibleError(
                    f"ensemble refinement for T={T} hit the cap m <= {cap}")
        m_table[T] = m_T
        rates[T] = tuple(m_T * logQ / n)
    M_set = tuple(sorted(set(m_table.values())))
    return RascDesign(K=K, n=n, Q=Q, eps_targets=eps_targets, m=m_table,
                      lam=lam_map, M_set=M_set, rates=rates,
                      assumption_ok=assumption_ok)


# --------------------------------------------------------------------------
# random-coding bound per active set
# --------------------------------------------------------------------------

def rasc_rcu_bound(pmf: JointPmf, design_: RascDesign, T, seed: int = 0,
                   mc_draws: int = 100_000,
                   row_budget: int | None = None) -> dict:
    """Ensemble-average error bound for active set T at its decoding time.

    |T| <= 2 (and |T| = 3 when the 8-letter table fits the row budget) is
    exact; otherwise Monte-Carlo over source draws with exact inner counting
    and a reported standard error.
    """
    T = tuple(sorted(T))
    marg = pmf.marginal(T) if len(T) < pmf.K else pmf
    n = design_.n
    logQ = np.log(np.array([design_.Q[i] for i in T], dtype=float))
    subs = subset_order(len(T))
    m_T = design_.m[T]
    log_Ms = np.array([m_T * float(logQ[list(s)].sum()) for s in subs])
    support = sum(1 for p in marg.mass if p > 0)
    budget = row_budget if row_budget is not None else 20_000_000
    if composition_count(n, support) <= budget:
        eng = JointRcuEngine(marg, n, row_budget=budget)
        return {"T": T, "value": eng.bound(log_Ms), "exact": True, "se": 0.0}
    if len(T) < 3:
        raise SizingError("two-encoder table exceeded the row budget")
    value, se = _mc_rcu(marg, n, log_Ms, seed=seed, draws=mc_draws)
    return {"T": T, "value": value, "exact": False, "se": se}


def _global_counting_measure(marg: JointPmf, n: int,
                             atom_budget: int = 5_000_000):
    """Counting measure of i(x^n) over support strings, letters grouped by
    exact mass; returns (sorted values, cumulative log counts, group map,
    weights) where group map sends a support letter to its group column."""
    from fractions import Fraction
    from .typetable import compositions
    from scipy.special import gammaln

    support = [o for o, p in zip(marg.outcomes(), marg.mass) if p > 0.0]
    masses = [q for q in marg.mass_exact if q > 0]
    groups: dict[Fraction, int] = {}
    letter_group = np.empty(len(support), dtype=np.int64)
    mult: list[int] = []
    for a, q in enumerate(masses):
        g = groups.get(q)
        if g is None:
            g = len(groups)
            groups[q] = g
            mult.append(0)
        letter_group[a] = g
        mult[g] += 1
    g_count = len(groups)
    if composition_count(n, g_count) > atom_budget:
        raise SizingError(
            f"global counting measure needs {composition_count(n, g_count)} atoms")
    weights = np.array([-math.log(float(q)) for q in groups])
    splits = compositions(n, g_count).astype(float)
    logc = (gammaln(n + 1.0) - gammaln(splits + 1.0).sum(axis=1)
            + splits @ np.log(np.array(mult, dtype=float)))
    vals = canonical_contract(splits, weights)
    order = np.argsort(vals, kind="stable")
    sv = vals[order]
    cum = np.logaddexp.accumulate(logc[order])
    return sv, cum, letter_group, weights


def _mc_rcu(marg: JointPmf, n: int, log_Ms: np.ndarray, seed: int,
            draws: int) -> tuple[float, float]:
    """Monte-Carlo ensemble bound: sample source blocks, count exactly."""
    k = marg.K
    subs = subset_order(k)
    support = [o for o, p in zip(marg.outcomes(), marg.mass) if p > 0.0]
    probs = np.array([p for p in marg.mass if p > 0.0])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
    letters = rng.choice(len(support), size=(draws, n), p=probs)

    log_terms = np.full((len(subs), draws), -np.inf)
    for j, sub in enumerate(subs):
        comp = tuple(i for i in range(k) if i not in sub)
        if not comp:
            sv, cum, letter_group, weights = _global_counting_measure(marg, n)
            cnt = np.zeros((draws, weights.size))
            np.add.at(cnt, (np.arange(draws)[:, None], letter_group[letters]), 1.0)
            own = canonical_contract(cnt, weights)
            pos = np.searchsorted(sv, own, side="right") - 1
            log_terms[j] = cum[pos] - log_Ms[j]
            continue
        cc = CondCounting(marg, sub, comp)
        b_index = {b: i for i, b in enumerate(cc.cond_letters)}
        cond_of = np.empty(len(support), dtype=np.int64)
        col_of = np.empty(len(support), dtype=np.int64)
        for a, letter in enumerate(support):
            b = tuple(letter[i] for i in comp)
            t = tuple(letter[i] for i in sub)
            cond_of[a] = b_index[b]
            bi, g = cc.group_of[(b, t)]
            col_of[a] = cc.column(bi, g)
        ccount = np.zeros((draws, len(cc.cond_letters)), dtype=np.int64)
        np.add.at(ccount, (np.arange(draws)[:, None], cond_of[letters]), 1)
        kmat = np.zeros((draws, cc.n_columns))
        np.add.at(kmat, (np.arange(draws)[:, None], col_of[letters]), 1.0)
        own = canonical_contract(kmat, cc.weight_vector())
        uniq, inv = np.unique(ccount, axis=0, return_inverse=True)
        for u in range(uniq.shape[0]):
            _, avals, logc = cc.atoms_for(tuple(uniq[u]))
            order = np.argsort(avals, kind="stable")
            sv = avals[order]
            cum = np.logaddexp.accumulate(logc[order])
            sel = inv == u
            pos = np.searchsorted(sv, own[sel], side="right") - 1
            log_terms[j][sel] = cum[pos] - log_Ms[j]

    from ._util import logsumexp
    per_draw = np.exp(np.minimum(0.0, logsumexp(log_terms, axis=0)))
    value = float(per_draw.mean())
    se = float(per_draw.std(ddof=1) / math.sqrt(draws))
    return value, se


def derandomize_check(expected: dict, floors: dict, targets: dict,
                      lam: dict) -> dict:
    """Existence check for one deterministic code meeting every target.

    expected/floors/targets map subsets to the ensemble-average bound, a
    converse floor, and the design target.  Success needs
    sum_T (E - floor)/(target - floor) < 1; the per-subset lambda budget
    additionally asks each term to stay within 1/(lambda_T + 1).
    """
    terms = {}
    budget_ok = {}
    for T, e in expected.items():
        T = tuple(sorted(T))
        f = floors[T]
        t = targets[T]
        if t <= f:
            raise InfeasibleError(f"target {t} at or below converse floor {f} for {T}")
        term = max(0.0, (e - f)) / (t - f)
        terms[T] = term
        budget_ok[T] = term <= 1.0 / (lam[T] + 1.0) + 1e-12
    total = float(sum(terms.values()))
    return {"terms": terms, "sum": total, "success": total < 1.0,
            "lambda_budget_ok": budget_ok}


# --------------------------------------------------------------------------
# activity model
# --------------------------------------------------------------------------

def activity_model(probabilities, n_epochs: int, seed: int) -> list[tuple[int, ...]]:
    """i.i.d. per-epoch Bernoulli activity per encoder, independent of the
    source values; deterministic per seed."""
    p = np.asarray(probabilities, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValidationError("activity probabilities must lie in [0,1]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAC7]))
    draws = rng.random((n_epochs, p.size)) < p[None, :]
    return [tuple(np.nonzero(row)[0]) for row in draws]


# --------------------------------------------------------------------------
# simulator
# --------------------------------------------------------------------------

@dataclass
class SimReport:
    design: RascDesign
    mode: str
    seed: int
    codebook_hash: str
    per_set: dict[tuple[int, ...], dict]
    warnings: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "codebook_hash": self.codebook_hash,
            "design": self.design.to_json_dict(),
            "per_set": {_subset_key(t) if t else "empty": v
                        for t, v in self.per_set.items()},
            "warnings": list(self.warnings),
        }


def wilson_interval(errors: int, trials: int, z: float = 1.959963984540054):
    """95% Wilson score interval: (center, half_width)."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    phat = errors / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials
                         + z * z / (4 * trials * trials)) / denom
    return center, half


class Simulator:
    """Explicit-codebook protocol simulator.

    One i.i.d. uniform codeword of m_max symbols per source block per
    encoder (nested prefixes by construction).  Decoding at m_T scans the
    intersection of prefix buckets for the most probable candidate tuple,
    breaking exact ties uniformly; identical-encoder mode shares a single
    codebook and restricts candidates to tuples of distinct blocks,
    counting a repeated-block truth as an error.
    """

    def __init__(self, pmf: JointPmf, design_: RascDesign, seed: int,
                 mode: str = "distinct-encoders"):
        if mode not in ("distinct-encoders", "identical-encoders"):
            raise ValidationError(f"unknown mode {mode!r}")
        self.pmf = pmf
        self.design = design_
        self.mode = mode
        self.seed = seed
        K, n = pmf.K, design_.n
        self.S = [s ** n for s in pmf.alphabet_sizes]
        if max(self.S) > EXPLICIT_CODEBOOK_CAP:
            raise SizingError(
                f"explicit codebook needs {max(self.S)} blocks > {EXPLICIT_CODEBOOK_CAP}")
        if mode == "identical-encoders":
            if len(set(pmf.alphabet_sizes)) != 1 or len(set(design_.Q)) != 1:
                raise ValidationError(
                    "identical encoders need one common source and symbol alphabet")
        ss = np.random.SeedSequence([seed, 0x5EED])
        cb_ss, src_ss, tie_ss = ss.spawn(3)
        self.rng_source = np.random.default_rng(src_ss)
        self.rng_tie = np.random.default_rng(tie_ss)
        rng_cb = np.random.default_rng(cb_ss)
        m_max = design_.m_max
        self.codebooks: list[np.ndarray] = []
        shared = None
        for i in range(K):
            if mode == "identical-encoders":
                if shared is None:
                    shared = rng_cb.integers(0, design_.Q[i],
                                             size=(self.S[i], m_max),
                                             dtype=np.int64)
                self.codebooks.append(shared)
            else:
                self.codebooks.append(rng_cb.integers(
                    0, design_.Q[i], size=(self.S[i], m_max), dtype=np.int64))
        h = hashlib.sha256()
        for cb in self.codebooks:
            h.update(cb.tobytes())
        self.codebook_hash = h.hexdigest()[:16]
        # per-block letter arrays and per-position joint log-probs
        self.block_letters = []
        for i in range(K):
            s = pmf.alphabet_sizes[i]
            idx = np.arange(self.S[i])
            letters = np.empty((self.S[i], n), dtype=np.int64)
            for pos in range(n - 1, -1, -1):
                letters[:, pos] = idx % s
                idx = idx // s
            self.block_letters.append(letters)
        with np.errstate(divide="ignore"):
            self.log_grid = np.log(pmf.grid)
        # prefix buckets per (encoder, decode length)
        self._buckets: dict[tuple[int, int], dict[bytes, np.ndarray]] = {}

    # ------------------------------------------------------------- plumbing
    def transmitted(self, encoder: int, block_index: int, m: int) -> np.ndarray:
        """First m code symbols for a source block (the nested prefix)."""
        return self.codebooks[encoder][block_index, :m]

    def _bucket(self, encoder: int, m: int) -> dict[bytes, np.ndarray]:
        key = (encoder, m)
        got = self._buckets.get(key)
        if got is not None:
            return got
        cb = self.codebooks[encoder][:, :m]
        order = np.lexsort(cb.T[::-1])
        sorted_rows = cb[order]
        buckets: dict[bytes, np.ndarray] = {}
        start = 0
        for idx in range(1, order.size + 1):
            if idx == order.size or not np.array_equal(sorted_rows[idx],
                                                       sorted_rows[start]):
                buckets[sorted_rows[start].tobytes()] = order[start:idx]
                start = idx
        self._buckets[key] = buckets
        return buckets

    def _sample_blocks(self, count: int) -> np.ndarray:
        """count x K matrix of block indices drawn from the n-fold joint."""
        K, n = self.pmf.K, self.design.n
        flat = self.rng_source.choice(
            self.pmf.mass.size, size=(count, n), p=self.pmf.mass)
        out = np.zeros((count, K), dtype=np.int64)
        sizes = self.pmf.alphabet_sizes
        for i in range(K):
            div = int(np.prod(sizes[i + 1:])) if i + 1 < K else 1
            letter_i = (flat // div) % sizes[i]
            for pos in range(n):
                out[:, i] = out[:, i] * sizes[i] + letter_i[:, pos]
        return out

    def _log_prob_tuple(self, blocks: dict[int, int], T: tuple[int, ...]) -> float:
        """ln P of the tuple of blocks for active set T (marginalized)."""
        n = self.design.n
        letters = [self.block_letters[i][blocks[i]] for i in T]
        if len(T) == self.pmf.K:
            total = 0.0
            for pos in range(n):
                total += self.log_grid[tuple(l[pos] for l in letters)]
            return total
        marg = self._marg_log(T)
        total = 0.0
        for pos in range(n):
            total += marg[tuple(l[pos] for l in letters)]
        return total

    def _marg_log(self, T: tuple[int, ...]) -> np.ndarray:
        if not hasattr(self, "_marg_cache"):
            self._marg_cache = {}
        got = self._marg_cache.get(T)
        if got is None:
            with np.errstate(divide="ignore"):
                got = np.log(self.pmf.marginal(T).grid)
            self._marg_cache[T] = got
        return got

    # ------------------------------------------------------------- decoding
    def decode(self, T: tuple[int, ...], truth: dict[int, int]) -> bool:
        """Run one epoch's decoding; returns True on success."""
        if not T:
            return True
        m_T = self.design.m[tuple(sorted(T))]
        cand_lists = []
        for i in T:
            prefix = self.codebooks[i][truth[i], :m_T].tobytes()
            bucket = self._bucket(i, m_T).get(prefix)
            if bucket is None:
                return False
            cand_lists.append(bucket)
        identical = self.mode == "identical-encoders"
        if identical and len(set(truth[i] for i in T)) != len(T):
            return False  # repeated-symbol truth is treated as an error
        best_lp = -math.inf
        best: list[tuple[int, ...]] = []
        import itertools as it
        for tup in it.product(*cand_lists):
            if identical and len(set(tup)) != len(tup):
                continue
            lp = self._log_prob_tuple({i: b for i, b in zip(T, tup)}, T)
            if lp > best_lp:
                best_lp, best = lp, [tup]
            elif lp == best_lp:
                best.append(tup)
        if not best:
            return False
        pick = best[self.rng_tie.integers(0, len(best))] if len(best) > 1 else best[0]
        return all(pick[j] == truth[i] for j, i in enumerate(T))

    # ----------------------------------------------------------------- runs
    def run(self, trials: int, active_sets=None,
            activity_probabilities=None) -> SimReport:
        if trials < 1:
            raise ValidationError("trials must be >= 1")
        per_set: dict[tuple[int, ...], dict] = {}

        def record(T, err, repeated):
            T = tuple(sorted(T))
            slot = per_set.setdefault(T, {"trials": 0, "errors": 0,
                                          "repeat_truths": 0})
            slot["trials"] += 1
            slot["errors"] += int(err)
            slot["repeat_truths"] += int(repeated)

        if activity_probabilities is not None:
            epochs = activity_model(activity_probabilities, trials, self.seed)
            blocks = self._sample_blocks(trials)
            for e, T in enumerate(epochs):
                truth = {i: int(blocks[e, i]) for i in range(self.pmf.K)}
                rep = len(set(truth[i] for i in T)) != len(T) if T else False
                record(T, not self.decode(T, truth) if T else False, rep)
        else:
            if active_sets is None:
                active_sets = [tuple(s) for s in subset_order(self.pmf.K)]
            for T in active_sets:
                T = tuple(sorted(T))
                blocks = self._sample_blocks(trials)
                for e in range(trials):
                    truth = {i: int(blocks[e, i]) for i in range(self.pmf.K)}
                    rep = len(set(truth[i] for i in T)) != len(T) if T else False
                    record(T, not self.decode(T, truth) if T else False, rep)

        out: dict[tuple[int, ...], dict] = {}
        for T, slot in per_set.items():
            tr, er = slot["trials"], slot["errors"]
            center, half = wilson_interval(er, tr)
            out[T] = {
                "trials": tr,
                "errors": er,
                "eps_hat": er / tr,
                "wilson_center": center,
                "wilson_half_width": half,
                "repeat_truths": slot["repeat_truths"],
                "feedback_bits": self.design.feedback_bits(T),
                "designed_m": self.design.m[T] if T else 1,
                "designed_eps": self.design.eps_targets.get(T),
            }
        return SimReport(design=self.design, mode=self.mode, seed=self.seed,
                         codebook_hash=self.codebook_hash, per_set=out)


def simulate(pmf: JointPmf, design_: RascDesign, trials: int, seed: int,
             mode: str = "distinct-encoders", active_sets=None,
             activity_probabilities=None) -> SimReport:
    sim = Simulator(pmf, design_, seed=seed, mode=mode)
    return sim.run(trials, active_sets=active_sets,
                   activity_probabilities=activity_probabilities)


__all__ = [
    "RascDesign",
    "SimReport",
    "Simulator",
    "design",
    "rasc_rcu_bound",
    "derandomize_check",
    "activity_model",
    "simulate",
    "wilson_interval",
]
