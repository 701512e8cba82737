"""Exact n-fold information-density distributions via method of types.

A :class:`TypeTable` enumerates every composition of n over the support
letters of a (possibly joint) finite source, carrying the string count, the
per-sequence log-probability, and any requested information-density
statistics, each an exact linear form in the composition.

Exactness discipline: statistic values are never deduplicated by float
equality.  Each statistic groups the support letters by the *exact rational*
probability ratio that defines its per-letter contribution, and all values
(table rows and measure atoms alike) are produced by one canonical
``counts @ weights`` contraction, so ties that are equal in exact arithmetic
are equal bit-for-bit here too.  Ties matter: inclusive counting drives the
RCU bounds.

Masses accumulate in the log domain.  Pruning is off by default; when a mass
floor is set, the pruned total is tracked on the measure so bounds stay
valid.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from ._util import logsumexp

from .errors import SizingError, ValidationError
from .probcore import JointPmf

DEFAULT_ROW_BUDGET = 20_000_000


# --------------------------------------------------------------------------
# statistic specification
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StatSpec:
    """An information-density statistic i(x_subset | x_given) to carry."""

    name: str
    subset: tuple[int, ...]
    given: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.subset:
            raise ValidationError("statistic subset must be nonempty")
        if set(self.subset) & set(self.given):
            raise ValidationError("subset and conditioning overlap")


def p2p_stat(pmf: JointPmf) -> StatSpec:
    return StatSpec("i", tuple(range(pmf.K)))


def pair_stats() -> list[StatSpec]:
    return [
        StatSpec("i1", (0,), (1,)),
        StatSpec("i2", (1,), (0,)),
        StatSpec("i12", (0, 1)),
    ]


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------

@dataclass
class StatMeasure:
    """Sorted discrete measure: strictly increasing values, log-domain masses."""

    values: np.ndarray
    log_mass: np.ndarray
    kind: str  # "probability" | "counting"
    truncated_mass: float = 0.0

    def __post_init__(self):
        if self.kind not in ("probability", "counting"):
            raise ValidationError(f"unknown measure kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float)
        lm = np.asarray(self.log_mass, dtype=float)
        if v.shape != lm.shape or v.ndim != 1:
            raise ValidationError("values/log_mass must be 1-d arrays of equal length")
        if v.size and np.any(np.diff(v) <= 0):
            raise ValidationError("measure values must be strictly increasing")
        self.values = v
        self.log_mass = lm
        self._cum = np.logaddexp.accumulate(lm) if lm.size else lm

    @property
    def total_log_mass(self) -> float:
        return float(self._cum[-1]) if self.values.size else -math.inf

    def log_cdf(self, t: float, inclusive: bool = True) -> float:
        side = "right" if inclusive else "left"
        idx = int(np.searchsorted(self.values, t, side=side)) - 1
        return float(self._cum[idx]) if idx >= 0 else -math.inf

    def cdf_query(self, t: float, inclusive: bool = True) -> float:
        return math.exp(self.log_cdf(t, inclusive))

    def log_tail(self, t: float, inclusive: bool = True) -> float:
        side = "left" if inclusive else "right"
        idx = int(np.searchsorted(self.values, t, side=side))
        if idx >= self.values.size:
            return -math.inf
        return float(logsumexp(self.log_mass[idx:]))

    def tail_query(self, t: float, inclusive: bool = True) -> float:
        return math.exp(self.log_tail(t, inclusive))


def _merge_sorted_atoms(values: np.ndarray, log_mass: np.ndarray, kind: str,
                        truncated: float = 0.0) -> StatMeasure:
    """Sort atoms and fold together entries whose float values coincide."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    lm = log_mass[order]
    if v.size:
        new_group = np.empty(v.size, dtype=bool)
        new_group[0] = True
        np.not_equal(v[1:], v[:-1], out=new_group[1:])
        idx = np.cumsum(new_group) - 1
        out_v = v[new_group]
        out_lm = np.full(out_v.size, -np.inf)
        np.logaddexp.at(out_lm, idx, lm)
    else:
        out_v, out_lm = v, lm
    return StatMeasure(out_v, out_lm, kind, truncated)


# --------------------------------------------------------------------------
# composition enumeration (colexicographic)
# --------------------------------------------------------------------------

def canonical_contract(kmat: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Fixed-order contraction sum_g k[:, g] * w[g].

    Used for every statistic value so that rows and measure atoms with the
    same exact key produce bit-identical floats regardless of array sizes
    (a BLAS gemv could pick different reduction orders).
    """
    kmat = np.asarray(kmat, dtype=float)
    out = np.zeros(kmat.shape[0])
    for g in range(weights.size):
        out += kmat[:, g] * weights[g]
    return out


def composition_count(n: int, s: int) -> int:
    return math.comb(n + s - 1, s - 1)


def compositions(n: int, s: int) -> np.ndarray:
    """All length-s compositions of n, in colexicographic order.

    Colex: rows sorted by the reversed tuple, i.e. the last coordinate is
    the slowest-varying one.
    """
    if s < 1:
        raise ValidationError("need at least one part")
    memo: dict[tuple[int, int], np.ndarray] = {}

    def rec(m: int, parts: int) -> np.ndarray:
        if parts == 1:
            return np.array([[m]], dtype=np.int32)
        key = (m, parts)
        got = memo.get(key)
        if got is not None:
            return got
        blocks = []
        for last in range(m + 1):
            sub = rec(m - last, parts - 1)
            col = np.full((sub.shape[0], 1), last, dtype=np.int32)
            blocks.append(np.hstack([sub, col]))
        out = np.vstack(blocks)
        memo[key] = out
        return out

    return rec(n, s)


# --------------------------------------------------------------------------
# per-statistic exact letter grouping
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _StatGroups:
    """Exact letter grouping for one statistic.

    letter_group[a] is the group index of support letter a (or -1 when the
    letter has zero conditional mass, i.e. infinite contribution, which
    cannot occur among positive-probability strings).  weights[g] is the
    canonical float contribution of one letter of group g.
    """

    letter_group: np.ndarray
    weights: np.ndarray
    ratios: tuple[Fraction, ...]


def _stat_groups(pmf: JointPmf, support: Sequence[tuple[int, ...]],
                 spec: StatSpec) -> _StatGroups:
    union = tuple(sorted(spec.subset + spec.given))
    m_union = pmf.marginal(union)
    m_given = pmf.marginal(spec.given) if spec.given else None
    u_out = list(m_union.outcomes())
    u_index = {o: i for i, o in enumerate(u_out)}
    if m_given is not None:
        g_out = list(m_given.outcomes())
        g_index = {o: i for i, o in enumerate(g_out)}
        g_sorted = tuple(sorted(spec.given))
    ratios: list[Fraction] = []
    ratio_index: dict[Fraction, int] = {}
    letter_group = np.full(len(support), -1, dtype=np.int64)
    for a, letter in enumerate(support):
        key_u = tuple(letter[i] for i in union)
        num = m_union.mass_exact[u_index[key_u]]
        if m_given is not None:
            key_g = tuple(letter[i] for i in g_sorted)
            den = m_given.mass_exact[g_index[key_g]]
        else:
            den = Fraction(1)
        if num == 0:
            continue  # infinite contribution; unreachable among support strings
        r = num / den
        g = ratio_index.get(r)
        if g is None:
            g = len(ratios)
            ratio_index[r] = g
            ratios.append(r)
        letter_group[a] = g
    weights = np.array([-math.log(float(r)) for r in ratios], dtype=float)
    return _StatGroups(letter_group, weights, tuple(ratios))


# --------------------------------------------------------------------------
# the table
# --------------------------------------------------------------------------

@dataclass
class TypeTable:
    """Composition table of an n-fold product source.

    Arrays are row-aligned: ``comps`` (rows x support size), ``log_mult``
    (ln string count), ``log_pseq`` (ln per-sequence probability) and
    ``log_prob`` (ln type-class probability).  ``stat`` maps statistic names
    to per-row values; ``groups`` keeps the exact grouping used to produce
    them.
    """

    pmf: JointPmf
    n: int
    support: tuple[tuple[int, ...], ...]
    comps: np.ndarray
    log_mult: np.ndarray
    log_pseq: np.ndarray
    stat: dict[str, np.ndarray]
    groups: dict[str, _StatGroups]
    specs: tuple[StatSpec, ...]

    @property
    def rows(self) -> int:
        return self.comps.shape[0]

    @property
    def log_prob(self) -> np.ndarray:
        return self.log_mult + self.log_pseq

    def group_counts(self, name: str) -> np.ndarray:
        """Per-row exact key: summed counts per letter group of a statistic."""
        g = self.groups[name]
        n_groups = g.weights.size
        ind = np.zeros((len(self.support), n_groups))
        for a, grp in enumerate(g.letter_group):
            if grp >= 0:
                ind[a, grp] = 1.0
        return self.comps.astype(float) @ ind

    def stat_values_from_counts(self, name: str, kmat: np.ndarray) -> np.ndarray:
        """Canonical value contraction shared by rows and measure atoms."""
        return canonical_contract(kmat, self.groups[name].weights)


def build(pmf: JointPmf, n: int, statistic_spec: Sequence[StatSpec],
          row_budget: int = DEFAULT_ROW_BUDGET) -> TypeTable:
    """Enumerate the type table with the requested statistics."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    support = tuple(o for o, p in zip(pmf.outcomes(), pmf.mass) if p > 0.0)
    s = len(support)
    if s == 0:
        raise ValidationError("pmf has empty support")
    need = composition_count(n, s)
    if need > row_budget:
        raise SizingError(
            f"type table needs {need} rows, budget is {row_budget}",
            required=need, budget=row_budget,
        )
    comps = compositions(n, s)
    cf = comps.astype(float)
    log_mult = gammaln(n + 1.0) - gammaln(cf + 1.0).sum(axis=1)
    ln_p = np.array([math.log(pmf.p(o)) for o in support])
    log_pseq = cf @ ln_p
    specs = tuple(statistic_spec)
    names = [sp.name for sp in specs]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate statistic names")
    groups: dict[str, _StatGroups] = {}
    stat: dict[str, np.ndarray] = {}
    table = TypeTable(pmf=pmf, n=n, support=support, comps=comps,
                      log_mult=log_mult, log_pseq=log_pseq, stat=stat,
                      groups=groups, specs=specs)
    for sp in specs:
        groups[sp.name] = _stat_groups(pmf, support, sp)
        kmat = table.group_counts(sp.name)
        stat[sp.name] = table.stat_values_from_counts(sp.name, kmat)
    return table


def attach_linear_stat(table: TypeTable, name: str,
                       exact_ratios: Sequence[Fraction]) -> None:
    """Attach a custom linear statistic with per-letter value -ln(ratio).

    ``exact_ratios`` gives one positive rational per support letter; letters
    with equal ratios merge into one exact group, so the statistic obeys the
    same tie discipline as the built-in information densities.  Used for
    log-likelihood-ratio statistics ln(P/Q) where ratio = Q(letter)/P(letter).
    """
    if name in table.stat:
        raise ValidationError(f"statistic {name!r} already attached")
    if len(exact_ratios) != len(table.support):
        raise ValidationError("need one exact ratio per support letter")
    ratios: list[Fraction] = []
    ratio_index: dict[Fraction, int] = {}
    letter_group = np.full(len(table.support), -1, dtype=np.int64)
    for a, r in enumerate(exact_ratios):
        r = Fraction(r)
        if r <= 0:
            raise ValidationError("ratios must be positive on the support")
        g = ratio_index.get(r)
        if g is None:
            g = len(ratios)
            ratio_index[r] = g
            ratios.append(r)
        letter_group[a] = g
    weights = np.array([-math.log(float(r)) for r in ratios], dtype=float)
    table.groups[name] = _StatGroups(letter_group, weights, tuple(ratios))
    kmat = table.group_counts(name)
    table.stat[name] = table.stat_values_from_counts(name, kmat)


# --------------------------------------------------------------------------
# pushforward and projections
# --------------------------------------------------------------------------

def pushforward(table: TypeTable, coordinate: str, kind: str = "probability",
                prune_below: float | None = None) -> StatMeasure:
    """Distribution (or counting measure) of one carried statistic.

    Atoms are aggregated by the statistic's exact group-count key first;
    only then are bit-identical float values folded together, so exact ties
    merge and nearby-but-distinct values never do.
    """
    if coordinate not in table.stat:
        raise ValidationError(f"statistic {coordinate!r} not carried by table")
    kmat = table.group_counts(coordinate)
    # unique exact keys
    keys = np.ascontiguousarray(kmat.astype(np.int64))
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    base = table.log_prob if kind == "probability" else table.log_mult
    agg = np.full(uniq.shape[0], -np.inf)
    np.logaddexp.at(agg, inv, base)
    values = table.stat_values_from_counts(coordinate, uniq.astype(float))
    truncated = 0.0
    if prune_below is not None:
        keep = agg >= math.log(prune_below) if prune_below > 0 else np.ones_like(agg, bool)
        dropped = agg[~keep]
        if dropped.size:
            truncated = float(np.exp(logsumexp(dropped)))
        values, agg = values[keep], agg[keep]
    return _merge_sorted_atoms(values, agg, kind, truncated)


@dataclass
class SortedProjection:
    """Rows of a table sorted by one statistic, with prefix sums of masses.

    Supports prefix-mass queries over either the probability or the counting
    mass at any threshold of the key statistic; the fixed stable sort makes
    results independent of evaluation order.
    """

    key_values: np.ndarray
    order: np.ndarray
    cum_log_prob: np.ndarray
    cum_log_count: np.ndarray

    def log_prefix(self, t: float, kind: str = "probability",
                   inclusive: bool = True) -> float:
        side = "right" if inclusive else "left"
        idx = int(np.searchsorted(self.key_values, t, side=side)) - 1
        if idx < 0:
            return -math.inf
        cum = self.cum_log_prob if kind == "probability" else self.cum_log_count
        return float(cum[idx])

    def prefix(self, t: float, kind: str = "probability",
               inclusive: bool = True) -> float:
        return math.exp(self.log_prefix(t, kind, inclusive))


def sorted_projection(table: TypeTable, key_coordinate: str) -> SortedProjection:
    vals = table.stat[key_coordinate]
    order = np.argsort(vals, kind="stable")
    kv = vals[order]
    clp = np.logaddexp.accumulate(table.log_prob[order])
    clc = np.logaddexp.accumulate(table.log_mult[order])
    return SortedProjection(kv, order, clp, clc)


# --------------------------------------------------------------------------
# conditional counting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _CondLetterGroups:
    """Per conditioning letter: exact conditional-ratio groups of targets.

    values[b] lists the canonical -ln(conditional probability) of each group,
    mult[b] the number of target letters in the group.
    """

    cond_letters: tuple[tuple[int, ...], ...]
    values: tuple[tuple[float, ...], ...]
    mult: tuple[tuple[int, ...], ...]


class CondCounting:
    """Counting measure of i(x-bar_S^n | x_B^n) as a function of the
    conditioning composition.

    The measure for a conditioning composition c is the convolution over
    conditioning letters b of the c_b-th convolution power of that letter's
    one-shot counting measure; atoms are keyed by the per-(letter, group)
    split counts, which is exact.
    """

    def __init__(self, pmf: JointPmf, subset: Sequence[int], given: Sequence[int]):
        subset = tuple(sorted(subset))
        given = tuple(sorted(given))
        if not subset or not given or set(subset) & set(given):
            raise ValidationError("need disjoint nonempty subset and conditioning sets")
        self.subset = subset
        self.given = given
        m_given = pmf.marginal(given)
        m_union = pmf.marginal(tuple(sorted(subset + given)))
        union = tuple(sorted(subset + given))
        u_index = {o: i for i, o in enumerate(m_union.outcomes())}
        cond_letters = []
        values = []
        mult = []
        group_of: dict[tuple, int] = {}
        for bi, b in enumerate(m_given.outcomes()):
            pb = m_given.mass_exact[bi]
            if pb == 0:
                continue
            acc: dict[Fraction, int] = {}
            members: dict[Fraction, list] = {}
            for t_out in m_union.outcomes():
                if tuple(t_out[union.index(i)] for i in given) != b:
                    continue
                q = m_union.mass_exact[u_index[t_out]]
                if q == 0:
                    continue
                r = q / pb
                acc[r] = acc.get(r, 0) + 1
                members.setdefault(r, []).append(
                    tuple(t_out[union.index(i)] for i in subset))
            ratios = sorted(acc.keys())
            b_idx = len(cond_letters)
            for g, r in enumerate(ratios):
                for target in members[r]:
                    group_of[(b, target)] = (b_idx, g)
            cond_letters.append(b)
            values.append(tuple(-math.log(float(r)) for r in ratios))
            mult.append(tuple(acc[r] for r in ratios))
        self.info = _CondLetterGroups(tuple(cond_letters), tuple(values), tuple(mult))
        #: (conditioning outcome, target outcome) -> (cond letter idx, group idx)
        self.group_of = group_of
        self._col_offset = np.concatenate(
            [[0], np.cumsum([len(v) for v in self.info.values])])

    def column(self, b_idx: int, g: int) -> int:
        """Global key-column index of group g under conditioning letter b."""
        return int(self._col_offset[b_idx]) + g

    @property
    def n_columns(self) -> int:
        return int(self._col_offset[-1])

    @property
    def cond_letters(self) -> tuple[tuple[int, ...], ...]:
        return self.info.cond_letters

    def _letter_power_atoms(self, b_idx: int, c: int):
        """Split-count atoms of the c-th convolution power for letter b."""
        vals = self.info.values[b_idx]
        mult = self.info.mult[b_idx]
        g = len(vals)
        splits = compositions(c, g) if g > 1 else np.array([[c]], dtype=np.int32)
        cf = splits.astype(float)
        log_counts = gammaln(c + 1.0) - gammaln(cf + 1.0).sum(axis=1)
        log_counts = log_counts + cf @ np.log(np.array(mult, dtype=float))
        return splits, cf, log_counts

    def atoms_for(self, cond_comp: Sequence[int]):
        """(key matrix, value vector, log-count vector) for a composition."""
        cond_comp = tuple(int(c) for c in cond_comp)
        if len(cond_comp) != len(self.info.cond_letters):
            raise ValidationError("conditioning composition has wrong length")
        keys = None
        logc = None
        for b_idx, c in enumerate(cond_comp):
            sp, cf, lc = self._letter_power_atoms(b_idx, c)
            if keys is None:
                keys, logc = cf, lc
            else:
                keys = np.hstack([
                    np.repeat(keys, cf.shape[0], axis=0),
                    np.tile(cf, (keys.shape[0], 1)),
                ])
                logc = (logc[:, None] + lc[None, :]).ravel()
        weights = self.weight_vector()
        vals = canonical_contract(keys, weights)
        return keys, vals, logc

    def weight_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(v, dtype=float) for v in self.info.values])

    def key_of_joint_counts(self, per_letter_counts: dict[tuple[int, ...], np.ndarray],
                            n_rows: int) -> np.ndarray:
        """Assemble row key vectors from per-(cond letter, group) count columns."""
        cols = []
        for b_idx, b in enumerate(self.info.cond_letters):
            g = len(self.info.values[b_idx])
            for gi in range(g):
                cols.append(per_letter_counts.get((b, gi), np.zeros(n_rows)))
        return np.stack(cols, axis=1)

    def measure_for(self, cond_comp: Sequence[int]) -> StatMeasure:
        _, vals, logc = self.atoms_for(cond_comp)
        return _merge_sorted_atoms(vals, logc, "counting")

    def convolve_power_check(self, b_idx: int, a: int, b: int) -> bool:
        """pow(m, a+b) equals convolve(pow(m,a), pow(m,b)) on composition keys."""
        sa, _, la = self._letter_power_atoms(b_idx, a)
        sb, _, lb = self._letter_power_atoms(b_idx, b)
        keys = (sa[:, None, :] + sb[None, :, :]).reshape(-1, sa.shape[1])
        logc = (la[:, None] + lb[None, :]).ravel()
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        agg = np.full(uniq.shape[0], -np.inf)
        np.logaddexp.at(agg, inv, logc)
        sab, _, lab = self._letter_power_atoms(b_idx, a + b)
        uniq2, inv2 = np.unique(sab, axis=0, return_inverse=True)
        agg2 = np.full(uniq2.shape[0], -np.inf)
        np.logaddexp.at(agg2, inv2, lab)
        return bool(np.array_equal(uniq, uniq2) and np.allclose(agg, agg2, atol=1e-12))


# --------------------------------------------------------------------------
# optional binary cache
# --------------------------------------------------------------------------

CACHE_ENV = "FBSC_CACHE_DIR"
CACHE_VERSION = 1


def _cache_path(pmf: JointPmf, n: int, names: tuple[str, ...]) -> str | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    key = f"tt_v{CACHE_VERSION}_{pmf.content_hash()}_n{n}_" + "_".join(names)
    return os.path.join(root, key + ".npz")


def build_cached(pmf: JointPmf, n: int, statistic_spec: Sequence[StatSpec],
                 row_budget: int = DEFAULT_ROW_BUDGET) -> TypeTable:
    """build() with an optional on-disk cache of the enumeration arrays.

    The cache stores the composition matrix and its mass columns; statistic
    values are recomputed on load (cheap vector contractions).  Enabled only
    when the FBSC_CACHE_DIR environment variable is set.
    """
    specs = tuple(statistic_spec)
    path = _cache_path(pmf, n, tuple(sp.name for sp in specs))
    if path and os.path.exists(path):
        data = np.load(path)
        if int(data["version"]) == CACHE_VERSION:
            support = tuple(o for o, p in zip(pmf.outcomes(), pmf.mass) if p > 0.0)
            groups: dict[str, _StatGroups] = {}
            stat: dict[str, np.ndarray] = {}
            table = TypeTable(
                pmf=pmf, n=n, support=support,
                comps=np.asarray(data["comps"], dtype=np.int32),
                log_mult=np.asarray(data["log_mult"], dtype=float),
                log_pseq=np.asarray(data["log_pseq"], dtype=float),
                stat=stat, groups=groups, specs=specs,
            )
            for sp in specs:
                groups[sp.name] = _stat_groups(pmf, support, sp)
                kmat = table.group_counts(sp.name)
                stat[sp.name] = table.stat_values_from_counts(sp.name, kmat)
            return table
    table = build(pmf, n, specs, row_budget)
    if path:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        np.savez_compressed(
            path, version=CACHE_VERSION, comps=table.comps,
            log_mult=table.log_mult, log_pseq=table.log_pseq,
        )
    return table


__all__ = [
    "DEFAULT_ROW_BUDGET",
    "StatSpec",
    "StatMeasure",
    "TypeTable",
    "SortedProjection",
    "CondCounting",
    "build",
    "build_cached",
    "compositions",
    "composition_count",
    "pushforward",
    "sorted_projection",
    "p2p_stat",
    "pair_stats",
]
