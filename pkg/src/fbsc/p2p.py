"""Point-to-point finite-blocklength quantities.

Exact optimum eps*(M) with fractional splitting of the boundary type class,
the three random-coding achievability bounds (threshold, dependence-testing,
random-coding-union with a maximum-likelihood decoder), the Han converse,
and the two closed-form rate expansions (the four-term achievability /
converse pair and the third-order random-coding expansion with its explicit
residual bound).

Code sizes are passed as log M (nats) so blocklengths in the thousands never
materialize astronomically large integers; bounds are valid for every real
M >= 1.  Tie handling is bound-faithful: the tail in the DT bound is strict,
every counting comparison is inclusive, even where that is loose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from ._util import logsumexp

from . import gaussfun as gf
from .errors import InfeasibleError, ValidationError, ZeroDispersionError
from .probcore import C0_IID, InfoMoments
from .typetable import TypeTable

LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# per-table cached projections
# --------------------------------------------------------------------------

class P2PEngine:
    """Sorted views of a single-statistic type table, reused across M values.

    The table must carry one statistic named "i" = the n-fold information
    density of the (possibly joint) source.
    """

    def __init__(self, table: TypeTable):
        if "i" not in table.stat:
            raise ValidationError('table must carry a statistic named "i"')
        self.table = table
        self.n = table.n
        vals = table.stat["i"]
        self.order = np.argsort(vals, kind="stable")
        self.vals = vals[self.order]
        self.log_prob = table.log_prob[self.order]
        self.log_mult = table.log_mult[self.order]
        self.log_pseq = table.log_pseq[self.order]
        self.cum_log_prob = np.logaddexp.accumulate(self.log_prob)
        self.cum_log_count = np.logaddexp.accumulate(self.log_mult)
        self.sfx_log_prob = np.logaddexp.accumulate(self.log_prob[::-1])[::-1]
        # inclusive count at each row, honoring exact ties
        grp_end = np.searchsorted(self.vals, self.vals, side="right") - 1
        self.log_count_incl = self.cum_log_count[grp_end]
        self.log_total_count = float(self.cum_log_count[-1])
        # descending-probability order for the optimal code, ties broken by
        # the deterministic colex row order
        self.desc = np.argsort(-table.log_pseq, kind="stable")
        self.desc_log_pseq = table.log_pseq[self.desc]
        self.desc_cum_count = np.logaddexp.accumulate(table.log_mult[self.desc])
        self.desc_cum_mass = np.logaddexp.accumulate(table.log_prob[self.desc])

    # ------------------------------------------------------------ exact code
    def eps_star(self, log_M: float) -> float:
        """1 - mass of the exp(log_M) most probable strings (fractional)."""
        if log_M < 0:
            raise ValidationError("need M >= 1")
        k = int(np.searchsorted(self.desc_cum_count, log_M, side="left"))
        if k >= self.desc_cum_count.size:
            return 0.0
        if k == 0:
            log_mass = self.desc_log_pseq[0] + log_M
        else:
            prev_count = self.desc_cum_count[k - 1]
            # log(M - C_{k-1}), safe because C_{k-1} < M
            log_rem = log_M + math.log1p(-math.exp(min(prev_count - log_M, 0.0)))
            log_mass = np.logaddexp(self.desc_cum_mass[k - 1],
                                    self.desc_log_pseq[k] + log_rem)
        return min(1.0, max(0.0, 1.0 - math.exp(min(log_mass, 0.0))))

    def log_m_star(self, eps: float) -> float:
        """log of the minimal real code size achieving error eps."""
        if not 0.0 < eps < 1.0:
            raise ValidationError("eps must lie in (0,1)")
        target = math.log1p(-eps)
        k = int(np.searchsorted(self.desc_cum_mass, target, side="left"))
        if k >= self.desc_cum_mass.size:
            return self.log_total_count
        if k == 0:
            return target - self.desc_log_pseq[0]
        prev_mass = self.desc_cum_mass[k - 1]
        log_need = target + math.log1p(-math.exp(min(prev_mass - target, 0.0)))
        return float(np.logaddexp(self.desc_cum_count[k - 1],
                                  log_need - self.desc_log_pseq[k]))

    def m_star(self, eps: float) -> int:
        """Minimal integer code size (small-scale convenience)."""
        return math.ceil(math.exp(self.log_m_star(eps)) - 1e-9)

    # -------------------------------------------------------------- measures
    def tail_prob(self, t, inclusive: bool):
        """P[i >= t] (inclusive) or P[i > t], vectorized over t."""
        side = "left" if inclusive else "right"
        idx = np.searchsorted(self.vals, t, side=side)
        out = np.where(idx >= self.vals.size, -np.inf,
                       self.sfx_log_prob[np.minimum(idx, self.vals.size - 1)])
        return np.exp(out)

    def log_tail_prob(self, t: float, inclusive: bool) -> float:
        side = "left" if inclusive else "right"
        idx = int(np.searchsorted(self.vals, t, side=side))
        if idx >= self.vals.size:
            return -math.inf
        return float(self.sfx_log_prob[idx])

    def log_count_cdf(self, t: float) -> float:
        idx = int(np.searchsorted(self.vals, t, side="right")) - 1
        return float(self.cum_log_count[idx]) if idx >= 0 else -math.inf

    # ---------------------------------------------------------------- bounds
    def dt_bound(self, log_M: float) -> float:
        """P[i > log M] + exp(-log M) U[i <= log M]."""
        tail = math.exp(self.log_tail_prob(log_M, inclusive=False))
        cnt = self.log_count_cdf(log_M)
        u_term = math.exp(cnt - log_M) if cnt > -math.inf else 0.0
        return min(1.0, tail + u_term)

    def dt_threshold_form(self, log_M: float, log_gamma: float) -> float:
        """The split threshold form at an arbitrary threshold log gamma."""
        tail = math.exp(self.log_tail_prob(log_gamma, inclusive=False))
        cnt = self.log_count_cdf(log_gamma)
        u_term = math.exp(cnt - log_M) if cnt > -math.inf else 0.0
        return tail + u_term

    def rcu_bound(self, log_M: float) -> float:
        """E[min{1, N(i(X))/M}] with the inclusive tie-counting N."""
        term = np.minimum(0.0, self.log_count_incl - log_M)
        return min(1.0, float(math.exp(logsumexp(self.log_prob + term))))

    def _group_starts(self) -> np.ndarray:
        if not hasattr(self, "_starts"):
            self._starts = np.searchsorted(self.vals, self.vals, side="left")
        return self._starts

    def threshold_bound(self, log_M: float) -> tuple[float, float]:
        """min over gamma > 0 of P[i > log M - gamma] + e^-gamma, with arg.

        The objective is piecewise monotone between the jump points of the
        information measure, so the minimum over each piece sits at the
        threshold value of an atom; those candidates are evaluated directly
        on the atom indices (no threshold round-trip through floats), plus a
        log-spaced interior refinement which cannot win but guards the
        no-atom corner.
        """
        starts = self._group_starts()
        ends = np.searchsorted(self.vals, self.vals, side="right")
        mask = self.vals < log_M  # gamma = log_M - v > 0
        best_v, best_g = 1.0 + math.exp(-max(log_M, 1e-12)), max(log_M, 1e-12)
        if np.any(mask):
            idx = np.nonzero(mask)[0]
            nxt = ends[idx]
            tails = np.where(nxt >= self.vals.size, -np.inf,
                             self.sfx_log_prob[np.minimum(nxt, self.vals.size - 1)])
            vals = np.exp(tails) + np.exp(self.vals[idx] - log_M)
            k = int(np.argmin(vals))
            if vals[k] < best_v:
                best_v, best_g = float(vals[k]), float(log_M - self.vals[idx[k]])
        g_grid = np.exp(np.linspace(math.log(1e-9), math.log(abs(log_M) + 60.0), 64))
        v_grid = self.tail_prob(log_M - g_grid, inclusive=False) + np.exp(-g_grid)
        k = int(np.argmin(v_grid))
        if v_grid[k] < best_v:
            best_v, best_g = float(v_grid[k]), float(g_grid[k])
        return min(1.0, best_v), best_g

    def han_converse(self, log_M: float) -> tuple[float, float]:
        """max over gamma > 0 of P[i >= log M + gamma] - e^-gamma, clamped.

        Candidates are the atoms above log M, where the inclusive tail is
        evaluated at its own group start so exact ties stay included.
        """
        starts = self._group_starts()
        mask = self.vals > log_M  # gamma = v - log_M > 0
        best_v, best_g = 0.0, 1.0
        if np.any(mask):
            idx = np.nonzero(mask)[0]
            tails = self.sfx_log_prob[starts[idx]]
            vals = np.exp(tails) - np.exp(log_M - self.vals[idx])
            k = int(np.argmax(vals))
            if vals[k] > best_v:
                best_v, best_g = float(vals[k]), float(self.vals[idx[k]] - log_M)
        return min(1.0, best_v), best_g


# --------------------------------------------------------------------------
# closed-form expansions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionResult:
    rate: float          # nats per symbol
    valid: bool
    validity_note: str = ""
    xi: float | None = None
    branch: int | None = None


def _scalar_hvt(mom: InfoMoments) -> tuple[float, float, float]:
    i_full = len(mom.subsets) - 1
    return float(mom.H[i_full]), float(mom.V[i_full, i_full]), float(mom.T3[i_full])


def kv_expansion(mom: InfoMoments, n: int, eps: float, side: str) -> ExpansionResult:
    """Four-term rate expansion, achievability or converse flavor (nats).

    Both displayed formulas are evaluated term by term; outside their stated
    (eps, n) validity ranges the value is still computed and flagged.
    """
    H, V, T = _scalar_hvt(mom)
    if V <= 0.0:
        raise ZeroDispersionError("kv_expansion requires positive varentropy")
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0,1)")
    qe = gf.q_inv(eps)
    base = H + math.sqrt(V / n) * qe - math.log(n) / (2.0 * n)
    ratio = T / V ** 1.5
    valid = True
    note = ""
    if side == "achiev":
        if eps > 0.5:
            valid, note = False, "outside stated range eps <= 1/2"
        if n <= (ratio / eps) ** 2:
            valid, note = False, f"n below validity threshold {(ratio / eps) ** 2:.3g}"
        inner = gf.phi(qe) + ratio / math.sqrt(n)
        if inner >= 1.0:
            return ExpansionResult(math.inf, False, "correction term diverges")
        corr = T / (V * gf.phi_pdf(gf.phi_inv(inner)))
        rate = base + (math.log(1.0 / math.sqrt(2.0 * math.pi * V) + ratio)
                       + corr) / n
        return ExpansionResult(rate, valid, note)
    if side == "conv":
        if eps > 0.5:
            valid, note = False, "outside stated range eps <= 1/2"
        denom = (gf.phi_pdf(qe) * qe) ** 2
        if denom > 0 and n <= 0.25 * (1.0 + ratio / 2.0) ** 2 / denom:
            valid, note = False, "n below validity threshold"
        rate = base - (T + 2.0 * V ** 1.5) / (2.0 * V * gf.phi_pdf(qe)) / n
        return ExpansionResult(rate, valid, note)
    raise ValidationError(f"unknown side {side!r}")


def rcu_asymp(mom: InfoMoments, n: int, eps: float,
              C0: float = C0_IID) -> ExpansionResult:
    """Third-order rate expansion achieved by ML random coding (nats)."""
    H, V, T = _scalar_hvt(mom)
    if V <= 0.0:
        raise ZeroDispersionError("rcu_asymp requires positive varentropy")
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0,1)")
    B = C0 * T / V ** 1.5
    C = 2.0 * (LN2 / math.sqrt(2.0 * math.pi * V) + 2.0 * B)
    bc = B + C
    if eps <= 0.5:
        branch = 1
        if n <= (bc / eps) ** 2:
            raise ValidationError(
                f"n={n} below branch-1 validity threshold {(bc / eps) ** 2:.6g}")
        inner = gf.phi(gf.q_inv(eps)) + bc / math.sqrt(n)
        xi = (math.log(C) + bc / gf.phi_pdf(gf.phi_inv(inner))) / n
    else:
        branch = 2
        if n <= (bc / (eps - 0.5)) ** 2:
            raise ValidationError(
                f"n={n} below branch-2 validity threshold {(bc / (eps - 0.5)) ** 2:.6g}")
        xi = (math.log(C) + bc / gf.phi_pdf(gf.q_inv(eps))) / n
    rate = (H + math.sqrt(V / n) * gf.q_inv(eps) - math.log(n) / (2.0 * n) + xi)
    return ExpansionResult(rate, True, "", xi=xi, branch=branch)


def uniform_rate_bounds(n: int, eps: float, H: float) -> tuple[float, float]:
    """Exact-code rate window for a uniform source of entropy H nats."""
    lo = H - math.log(1.0 / (1.0 - eps)) / n
    hi = lo + math.exp(-n * H) / (n * (1.0 - eps))
    return lo, hi


# --------------------------------------------------------------------------
# rate inversion
# --------------------------------------------------------------------------

def invert_rate(bound_fn, n: int, eps: float, log_m_max: float,
                rate_tol: float = 1e-6, log_m_min: float = 0.0) -> float:
    """Minimal rate log(M)/n with bound_fn(log M) <= eps.

    bound_fn must be nonincreasing in M.  Raises InfeasibleError when even
    M = exp(log_m_max) cannot reach eps.  log_m_min lets callers who know a
    converse-side lower anchor skip the left part of the bracket.
    """
    if bound_fn(log_m_min) <= eps:
        return log_m_min / n
    if bound_fn(log_m_max) > eps:
        raise InfeasibleError(f"uncodable at eps={eps} within log M <= {log_m_max}")
    lo, hi = log_m_min, log_m_max
    tol = max(n * rate_tol, 1e-12)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bound_fn(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi / n


__all__ = [
    "P2PEngine",
    "ExpansionResult",
    "kv_expansion",
    "rcu_asymp",
    "uniform_rate_bounds",
    "invert_rate",
]
