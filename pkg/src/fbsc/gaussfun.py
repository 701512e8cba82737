"""Scalar and multivariate Gaussian machinery.

Provides Phi/Q and their inverses, the multivariate cdf Phi(V; z) for
dimensions up to 7 (exact quadrature for d <= 3, seeded randomized QMC for
4 <= d <= 7), boundaries of the multidimensional quantile region
Q_inv(V, eps), the shift-inclusion constant check, and the two explicit
Berry-Esseen-style tail constants used by the rate expansions.

Singular covariances are handled by structure detection first (zero-variance
coordinates become hard constraints, pairwise proportional coordinates merge,
one coordinate equal to a nonnegative combination of two others is folded
into an exact conditioning quadrature) with a generic eigen-reduction QMC
fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import NumericError, ValidationError, ZeroDispersionError

SQRT2 = math.sqrt(2.0)
_TINY_VAR = 1e-12


# --------------------------------------------------------------------------
# scalar normal cdf and inverses
# --------------------------------------------------------------------------

def phi_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def phi(x):
    """Standard normal cdf."""
    return special.ndtr(x)


def q_func(x):
    """Complementary normal cdf, computed without cancellation."""
    return special.ndtr(-np.asarray(x, dtype=float))


def _halley_refine(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    # One Halley step on f(x) = Phi(x) - p; the rational seed is already
    # near machine precision, this polishes the last ulps.
    f = special.ndtr(x) - p
    d = phi_pdf(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = f / d
        corr = t / (1.0 + 0.5 * x * t)
    corr = np.where(np.isfinite(corr), corr, 0.0)
    return x - corr


def phi_inv(p):
    """Inverse of Phi on (0,1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise ValidationError("phi_inv requires p in (0,1)")
    x = special.ndtri(p_arr)
    x = _halley_refine(x, p_arr)
    return float(x) if np.isscalar(p) or p_arr.ndim == 0 else x


def q_inv(p):
    """Inverse of Q on (0,1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise ValidationError("q_inv requires p in (0,1)")
    x = -special.ndtri(p_arr)
    x = -_halley_refine(-x, p_arr)
    return float(x) if np.isscalar(p) or p_arr.ndim == 0 else x


# --------------------------------------------------------------------------
# bivariate cdf: Drezner-West style kernel
# --------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def bvn_cdf(h, k, rho: float):
    """P[Z1 <= h, Z2 <= k] for standard bivariate normal, abs err <~ 1e-13.

    Uses the Plackett identity dPhi2/drho = bivariate density, integrated in
    the theta = arcsin(r) variable so the integrand stays smooth up to
    |rho| -> 1.  Vectorized over h, k with fixed rho.
    """
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    if not -1.0 <= rho <= 1.0:
        raise ValidationError(f"correlation {rho!r} outside [-1, 1]")
    if abs(rho) == 1.0:
        # degenerate: Z2 = +/- Z1
        if rho > 0:
            return special.ndtr(np.minimum(h, k))
        return np.clip(special.ndtr(h) - special.ndtr(-k), 0.0, 1.0)

    base = special.ndtr(h) * special.ndtr(k)
    if rho == 0.0:
        return base
    alpha = math.asin(rho)
    theta = 0.5 * alpha * (_GL_NODES + 1.0)
    w = 0.5 * alpha * _GL_WEIGHTS
    sin_t = np.sin(theta)
    cos2_t = np.cos(theta) ** 2
    hh = h[..., None]
    kk = k[..., None]
    expo = np.exp(-(hh * hh + kk * kk - 2.0 * hh * kk * sin_t) / (2.0 * cos2_t))
    corr = (expo * w).sum(axis=-1) / (2.0 * math.pi)
    out = base + corr
    return np.clip(out, 0.0, 1.0)


# --------------------------------------------------------------------------
# covariance structure and MvnSpec
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MvnSpec:
    """Validated covariance with its rank-reduced eigen-factorization.

    V = Tmat @ V_r @ Tmat.T with V_r nonsingular (lambda_min > 1e-12);
    zero-variance coordinates remain in V but carry no columns in Tmat.
    """

    V: np.ndarray
    rank: int
    Tmat: np.ndarray
    V_r: np.ndarray

    @property
    def d(self) -> int:
        return self.V.shape[0]

    @staticmethod
    def from_cov(V) -> "MvnSpec":
        V = np.asarray(V, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ValidationError("covariance must be a square matrix")
        if not np.allclose(V, V.T, atol=1e-10):
            raise ValidationError("covariance must be symmetric")
        d = V.shape[0]
        if d > 7:
            raise ValidationError("mvn dimension capped at 7")
        evals, evecs = np.linalg.eigh((V + V.T) / 2.0)
        if evals.min(initial=0.0) < -1e-10 * max(1.0, float(abs(evals).max(initial=1.0))):
            raise ValidationError("covariance is indefinite")
        scale = float(evals.max(initial=0.0))
        keep = evals > max(_TINY_VAR, 1e-14 * max(scale, 1.0))
        r = int(keep.sum())
        Tmat = evecs[:, keep] * np.sqrt(evals[keep])
        # V_r is the identity-coordinates covariance of W where U = Tmat W
        V_r = np.eye(r)
        recon = Tmat @ V_r @ Tmat.T
        if r > 0 and np.linalg.norm(recon - V) > 1e-10 * max(1.0, np.linalg.norm(V)):
            raise NumericError("rank reduction failed to reproduce V")
        return MvnSpec(V=V, rank=r, Tmat=Tmat, V_r=V_r)


def _gl_panels(a: float, b: float, n_panels: int = 24, order: int = 24):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    mid = (edges[:-1] + edges[1:]) / 2.0
    half = (edges[1:] - edges[:-1]) / 2.0
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


def _trivariate_cdf(V: np.ndarray, z: np.ndarray) -> float:
    """Nonsingular d=3 cdf by conditioning quadrature on the last coordinate."""
    s3 = math.sqrt(V[2, 2])
    a = np.array([V[0, 2], V[1, 2]]) / V[2, 2]
    Vc = V[:2, :2] - np.outer(a, a) * V[2, 2]
    s1 = math.sqrt(max(Vc[0, 0], 0.0))
    s2 = math.sqrt(max(Vc[1, 1], 0.0))
    lo, hi = -8.5 * s3, min(z[2], 8.5 * s3)
    if hi <= lo:
        return 0.0 if z[2] < 0 else float(
            bvn_cdf(z[0] / math.sqrt(V[0, 0]), z[1] / math.sqrt(V[1, 1]),
                    V[0, 1] / math.sqrt(V[0, 0] * V[1, 1])))
    u, w = _gl_panels(lo, hi, n_panels=40, order=24)
    dens = phi_pdf(u / s3) / s3
    if s1 < 1e-9 or s2 < 1e-9:
        # conditionally (near-)deterministic coordinate: indicator factors
        vals = np.ones_like(u)
        if s1 < 1e-9:
            vals *= (z[0] - a[0] * u >= 0).astype(float)
        else:
            vals *= special.ndtr((z[0] - a[0] * u) / s1)
        if s2 < 1e-9:
            vals *= (z[1] - a[1] * u >= 0).astype(float)
        else:
            vals *= special.ndtr((z[1] - a[1] * u) / s2)
    else:
        rho = float(Vc[0, 1] / (s1 * s2))
        rho = min(1.0, max(-1.0, rho))
        vals = bvn_cdf((z[0] - a[0] * u) / s1, (z[1] - a[1] * u) / s2, rho)
    return float((dens * vals * w).sum())


def _detect_sum_structure(V: np.ndarray):
    """Find (i, j, k) with Z_k = Z_i + Z_j exactly (within 1e-10), else None."""
    d = V.shape[0]
    scale = max(1.0, float(np.abs(V).max()))
    for k in range(d):
        for i in range(d):
            for j in range(i + 1, d):
                if k in (i, j):
                    continue
                ok = (abs(V[k, k] - (V[i, i] + 2 * V[i, j] + V[j, j])) <= 1e-10 * scale
                      and all(abs(V[k, m] - (V[i, m] + V[j, m])) <= 1e-10 * scale
                              for m in range(d)))
                if ok:
                    return i, j, k
    return None


def _qmc_cdf(spec: MvnSpec, z: np.ndarray, seed: int, target_se: float,
             log2_n: int = 13, reps: int = 24) -> tuple[float, float]:
    """Genz separation-of-variables estimate with randomized Sobol points.

    Applies to the rank-reduced polyhedron P[Tmat W <= z] with W standard
    normal in r dims.  When the constraint system is axis-aligned after
    Cholesky (the nonsingular case) this is the classical Genz algorithm;
    otherwise it falls back to indicator sampling on the polyhedron.
    """
    from scipy.stats import qmc

    r = spec.rank
    Tm = spec.Tmat
    d = spec.d
    # Nonsingular full-rank case: sequential conditioning via Cholesky.
    if r == d:
        L = np.linalg.cholesky(spec.V + 1e-15 * np.eye(d) * max(1.0, np.abs(spec.V).max()))
        rng = np.random.default_rng(seed)
        est = []
        for rep in range(reps):
            sob = qmc.Sobol(d=d, scramble=True, seed=rng.integers(2**63))
            u = sob.random(2 ** log2_n)
            n = u.shape[0]
            prob = np.ones(n)
            y = np.zeros((n, d))
            for i in range(d):
                upper = (z[i] - y[:, :i] @ L[i, :i]) / L[i, i]
                e = special.ndtr(upper)
                prob *= e
                ui = np.clip(u[:, i] * e, 1e-16, 1 - 1e-16)
                y[:, i] = special.ndtri(ui)
            est.append(prob.mean())
        est = np.asarray(est)
        mean = float(est.mean())
        se = float(est.std(ddof=1) / math.sqrt(reps))
        return mean, se
    # Singular: indicator QMC over the reduced normal.
    rng = np.random.default_rng(seed)
    est = []
    for rep in range(reps):
        sob = qmc.Sobol(d=max(r, 1), scramble=True, seed=rng.integers(2**63))
        u = np.clip(sob.random(2 ** log2_n), 1e-16, 1 - 1e-16)
        wpts = special.ndtri(u)
        ok = np.all(wpts @ Tm.T <= z[None, :] + 1e-300, axis=1)
        est.append(ok.mean())
    est = np.asarray(est)
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(reps))


def mvn_cdf(spec: MvnSpec | np.ndarray, z, seed: int = 0) -> tuple[float, float]:
    """P[Z <= z] for Z ~ N(0, V), with an absolute error estimate.

    d=1 closed form; d=2 quadrature (<=1e-10); d=3 conditioning quadrature
    (<=1e-8); d in 4..7 randomized QMC with reported standard error
    (deterministic per seed).  Zero-variance coordinates act as hard
    constraints z_i >= 0; exact singular structures (proportional pairs,
    Z_k = Z_i + Z_j) are folded into conditioning quadrature.
    """
    if not isinstance(spec, MvnSpec):
        spec = MvnSpec.from_cov(spec)
    V = spec.V
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != spec.d:
        raise ValidationError(f"z has dim {z.size}, expected {spec.d}")

    # Hard constraints from zero-variance coordinates.
    keep = [i for i in range(spec.d) if V[i, i] > _TINY_VAR]
    for i in range(spec.d):
        if V[i, i] <= _TINY_VAR and z[i] < 0.0:
            return 0.0, 0.0
    if not keep:
        return 1.0, 0.0
    if len(keep) < spec.d:
        return mvn_cdf(V[np.ix_(keep, keep)], z[keep], seed=seed)

    d = spec.d
    if d == 1:
        return float(special.ndtr(z[0] / math.sqrt(V[0, 0]))), 1e-15

    # Merge proportional coordinates (Z_j = a Z_i): corr = +/-1.
    sd = np.sqrt(np.diag(V))
    corr = V / np.outer(sd, sd)
    for i in range(d):
        for j in range(i + 1, d):
            if abs(abs(corr[i, j]) - 1.0) <= 1e-12:
                a = V[i, j] / V[i, i]  # Z_j = a Z_i
                if a > 0:
                    zi = min(z[i], z[j] / a)
                    rest = [m for m in range(d) if m != j]
                    z2 = z[rest].copy()
                    z2[rest.index(i)] = zi
                    return mvn_cdf(V[np.ix_(rest, rest)], z2, seed=seed)
                # opposite-sign degeneracy: P[Z_i <= z_i, -|a| Z_i <= z_j, ...]
                lo = -z[j] / a  # Z_i >= lo
                if lo > z[i]:
                    return 0.0, 0.0
                rest = [m for m in range(d) if m != j]
                Vr = V[np.ix_(rest, rest)]
                zr = z[rest]
                hi_p, e1 = mvn_cdf(Vr, zr, seed=seed)
                zr_lo = zr.copy()
                zr_lo[rest.index(i)] = lo
                lo_p, e2 = mvn_cdf(Vr, zr_lo, seed=seed)
                return max(hi_p - lo_p, 0.0), e1 + e2

    if d == 2:
        rho = float(corr[0, 1])
        val = float(bvn_cdf(z[0] / sd[0], z[1] / sd[1], rho))
        return val, 1e-10

    if np.linalg.matrix_rank(V, tol=1e-10 * max(1.0, float(np.abs(V).max()))) < d:
        sum3 = _detect_sum_structure(V)
        if sum3 is not None and d == 3:
            i, j, k = sum3
            # condition on Z_i: (Z_j | Z_i=u) normal; Z_k = u + Z_j
            sii = math.sqrt(V[i, i])
            a = V[i, j] / V[i, i]
            s_c = math.sqrt(max(V[j, j] - a * a * V[i, i], 0.0))
            lo, hi = -8.5 * sii, min(z[i], 8.5 * sii)
            if hi <= lo:
                return 0.0, 0.0
            u, w = _gl_panels(lo, hi, n_panels=40, order=24)
            upper = np.minimum(z[j], z[k] - u)
            if s_c < 1e-9:
                vals = (upper - a * u >= 0).astype(float)
            else:
                vals = special.ndtr((upper - a * u) / s_c)
            dens = phi_pdf(u / sii) / sii
            return float((dens * vals * w).sum()), 1e-8
        # generic singular fallback
        val, se = _qmc_cdf(spec, z, seed=seed, target_se=1e-4)
        return val, se

    if d == 3:
        return _trivariate_cdf(V, z), 1e-8

    val, se = _qmc_cdf(spec, z, seed=seed, target_se=1e-4)
    return val, se


def mvn_cdf_value(spec, z, seed: int = 0) -> float:
    return mvn_cdf(spec, z, seed=seed)[0]


# --------------------------------------------------------------------------
# Q_inv region boundary
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QinvSet:
    """Sampled boundary of {z : P[Z <= z] >= 1-eps} for Z ~ N(0, V), d <= 3.

    ``grid`` holds the first d-1 coordinates of each sample; ``boundary``
    the bisected last coordinate (NaN where the level is unreachable, which
    is recorded in ``unbounded``).
    """

    spec: MvnSpec
    eps: float
    grid: np.ndarray
    boundary: np.ndarray
    unbounded: np.ndarray


def qinv_boundary(spec: MvnSpec | np.ndarray, eps: float,
                  grid: np.ndarray | None = None, tol: float = 1e-9,
                  seed: int = 0) -> QinvSet:
    """Trace the Q_inv(V, eps) boundary by bisection on the last coordinate."""
    if not isinstance(spec, MvnSpec):
        spec = MvnSpec.from_cov(spec)
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0,1)")
    d = spec.d
    if d > 3:
        raise ValidationError("qinv_boundary supports d <= 3")
    if d == 1:
        val = math.sqrt(spec.V[0, 0]) * q_inv(eps)
        return QinvSet(spec, eps, np.zeros((1, 0)), np.array([val]),
                       np.array([False]))
    if grid is None:
        sds = np.sqrt(np.diag(spec.V))
        axes = [np.linspace(-3.0 * s, 6.0 * s, 25) for s in sds[:-1]]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=1)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    target = 1.0 - eps
    s_last = math.sqrt(max(spec.V[-1, -1], _TINY_VAR))
    boundary = np.full(grid.shape[0], np.nan)
    unbounded = np.zeros(grid.shape[0], dtype=bool)
    for idx in range(grid.shape[0]):
        zfix = grid[idx]
        hi = 9.0 * s_last
        reachable, _ = mvn_cdf(spec, np.append(zfix, hi), seed=seed)
        if reachable < target:
            unbounded[idx] = True
            continue
        lo = -9.0 * s_last
        flo, _ = mvn_cdf(spec, np.append(zfix, lo), seed=seed)
        if flo >= target:
            boundary[idx] = lo
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm, _ = mvn_cdf(spec, np.append(zfix, mid), seed=seed)
            if fm >= target:
                hi = mid
            else:
                lo = mid
            if hi - lo <= tol:
                break
        boundary[idx] = hi
    return QinvSet(spec, eps, grid, boundary, unbounded)


def qinv_shift_check(spec: MvnSpec | np.ndarray, eps: float, delta: float,
                     n_rays: int = 16, d_grid: int = 60,
                     d_max: float = 50.0, seed: int = 0) -> float:
    """Smallest grid-verified D with Q_inv(eps) + D*delta*1 inside Q_inv(eps-delta).

    Samples boundary points of Q_inv(V, eps) along rays, then scans D on a
    grid until every shifted sample reaches the 1-(eps-delta) level.  The
    tested property is existence of a finite D, not a particular value.
    """
    if not isinstance(spec, MvnSpec):
        spec = MvnSpec.from_cov(spec)
    if delta < 0 or delta > 0.05:
        raise ValidationError("delta must lie in [0, 0.05]")
    if delta == 0.0:
        return 0.0
    if not 0.0 < eps - delta < eps < 1.0:
        raise ValidationError("need 0 < eps-delta < eps < 1")
    d = spec.d
    if d == 1:
        s = math.sqrt(spec.V[0, 0])
        return s * (q_inv(eps - delta) - q_inv(eps)) / delta
    # boundary samples: vary the first d-1 coordinates along a modest grid
    sds = np.sqrt(np.diag(spec.V))
    axes = [np.linspace(-1.5 * s, 4.0 * s, max(2, n_rays // (d - 1))) for s in sds[:-1]]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    bset = qinv_boundary(spec, eps, grid=grid, seed=seed)
    pts = [np.append(g, b) for g, b, u in zip(bset.grid, bset.boundary, bset.unbounded)
           if not u]
    if not pts:
        raise NumericError("no bounded boundary samples found")
    target = 1.0 - (eps - delta)
    for D in np.linspace(0.0, d_max, d_grid + 1):
        ok = True
        for z in pts:
            val, _ = mvn_cdf(spec, z + D * delta, seed=seed)
            if val < target - 1e-9:
                ok = False
                break
        if ok:
            return float(D)
    raise NumericError(f"no D <= {d_max} verifies the shift inclusion")


# --------------------------------------------------------------------------
# explicit scalar tail constants
# --------------------------------------------------------------------------

def be_bound(V: float, T3: float, n: int, C0: float) -> float:
    """Berry-Esseen deviation bound C0 T / (V^{3/2} sqrt(n))."""
    if V <= 0.0:
        if T3 == 0.0:
            return 0.0
        raise ZeroDispersionError("be_bound needs V > 0")
    if n < 1:
        raise ValidationError("n must be >= 1")
    return C0 * T3 / (V ** 1.5 * math.sqrt(n))


def lemma47_bound(V: float, T3: float, n: int, A: float, C0: float) -> float:
    """Tail-expectation bound 2(ln2/sqrt(2 pi V) + 2 C0 T/V^{3/2}) e^{-A}/sqrt(n)."""
    if V <= 0.0:
        raise ZeroDispersionError("lemma47_bound needs V > 0")
    if n < 1:
        raise ValidationError("n must be >= 1")
    k = 2.0 * (math.log(2.0) / math.sqrt(2.0 * math.pi * V) + 2.0 * C0 * T3 / V ** 1.5)
    return k * math.exp(-A) / math.sqrt(n)


__all__ = [
    "MvnSpec",
    "QinvSet",
    "phi",
    "phi_pdf",
    "phi_inv",
    "q_func",
    "q_inv",
    "bvn_cdf",
    "mvn_cdf",
    "mvn_cdf_value",
    "qinv_boundary",
    "qinv_shift_check",
    "be_bound",
    "lemma47_bound",
]
