"""Finite joint sources and their information-density moments.

A :class:`JointPmf` is the single source of truth for every scalar or vector
moment consumed downstream: conditional entropies, the entropy dispersion
matrix, third absolute moments, and the conditional-varentropy random
variables that drive the explicit Berry-Esseen-style constants.

All internal quantities are in nats.  Display-unit conversion happens at the
CLI layer only.

Subset enumeration convention: the nonempty subsets of {0, .., K-1} are
ordered by (size, lexicographic), e.g. for K=2 the vector quantities are
indexed by ({0}, {1}, {0,1}) which matches the (conditional, conditional,
joint) ordering used throughout.  Every vector quantity in the package uses
this one order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError, ZeroDispersionError

MASS_TOL = 1e-12

#: Berry-Esseen absolute constant for sums of i.i.d. terms.
C0_IID = 0.4690

LN2 = math.log(2.0)


def subset_order(k: int) -> list[tuple[int, ...]]:
    """Nonempty subsets of range(k), sorted by (size, lexicographic)."""
    subs: list[tuple[int, ...]] = []
    for size in range(1, k + 1):
        subs.extend(itertools.combinations(range(k), size))
    return subs


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)  # exact binary expansion for floats


@dataclass(frozen=True)
class JointPmf:
    """Joint distribution of K finite sources over a product alphabet.

    The flat ``mass`` array is indexed in C order over the product alphabet
    (source 0 slowest).  ``mass_exact`` keeps rational masses so that exact
    tie detection (equal-probability letters) survives float rounding.
    Instances are immutable; all arrays are read-only views.
    """

    alphabet_sizes: tuple[int, ...]
    mass: np.ndarray
    mass_exact: tuple[Fraction, ...]
    log_base_out: float = math.e

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.alphabet_sizes)
        if len(sizes) < 1 or any(s < 1 for s in sizes):
            raise ValidationError(f"alphabet sizes must be positive, got {sizes}")
        object.__setattr__(self, "alphabet_sizes", sizes)
        mass = np.asarray(self.mass, dtype=float).reshape(-1)
        if mass.size != int(np.prod(sizes)):
            raise ValidationError(
                f"mass array has {mass.size} entries, expected {int(np.prod(sizes))}"
            )
        if np.any(mass < 0):
            raise ValidationError("negative probability mass")
        if abs(mass.sum() - 1.0) > MASS_TOL:
            raise ValidationError(f"masses sum to {mass.sum()!r}, not 1 within {MASS_TOL}")
        mass = mass.copy()
        mass.flags.writeable = False
        object.__setattr__(self, "mass", mass)
        if len(self.mass_exact) != mass.size:
            raise ValidationError("mass_exact length mismatch")

    # ---------------------------------------------------------------- basics
    @property
    def K(self) -> int:
        return len(self.alphabet_sizes)

    @property
    def grid(self) -> np.ndarray:
        """mass reshaped to the K-dimensional product alphabet."""
        return self.mass.reshape(self.alphabet_sizes)

    @staticmethod
    def from_masses(alphabet_sizes: Sequence[int], masses: Iterable) -> "JointPmf":
        """Build from float/Fraction/str masses; rationals are kept exact."""
        exact = tuple(_as_fraction(m) for m in masses)
        arr = np.array([float(m) for m in exact], dtype=float)
        total = sum(exact)
        if total != 1 and abs(float(total) - 1.0) > MASS_TOL:
            raise ValidationError(f"masses sum to {float(total)!r}, not 1")
        return JointPmf(tuple(int(s) for s in alphabet_sizes), arr, exact)

    @staticmethod
    def bernoulli(p: float) -> "JointPmf":
        return JointPmf.from_masses((2,), [1.0 - p, p])

    @staticmethod
    def product(*pmfs: "JointPmf") -> "JointPmf":
        """Independent product of single-source (or joint) pmfs."""
        sizes: tuple[int, ...] = ()
        exact: list[Fraction] = [Fraction(1)]
        for pmf in pmfs:
            sizes = sizes + pmf.alphabet_sizes
            exact = [a * b for a in exact for b in pmf.mass_exact]
        return JointPmf.from_masses(sizes, exact)

    def outcomes(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(s) for s in self.alphabet_sizes)))

    def p(self, outcome: Sequence[int]) -> float:
        return float(self.grid[tuple(outcome)])

    # ------------------------------------------------- marginals/conditionals
    def marginal(self, subset: Sequence[int]) -> "JointPmf":
        """Marginal pmf on the given (ordered) subset of source indices."""
        subset = tuple(subset)
        if not subset or sorted(set(subset)) != sorted(subset):
            raise ValidationError(f"bad subset {subset}")
        if any(i < 0 or i >= self.K for i in subset):
            raise ValidationError(f"subset {subset} out of range for K={self.K}")
        keep = sorted(subset)
        sizes = tuple(self.alphabet_sizes[i] for i in keep)
        acc: dict[tuple[int, ...], Fraction] = {}
        for out, q in zip(self.outcomes(), self.mass_exact):
            key = tuple(out[i] for i in keep)
            acc[key] = acc.get(key, Fraction(0)) + q
        exact = [acc[o] for o in itertools.product(*(range(s) for s in sizes))]
        return JointPmf.from_masses(sizes, exact)

    def conditional(self, given_index: int, given_value: int) -> "JointPmf":
        """Pmf of the remaining sources given one coordinate's value."""
        if not 0 <= given_index < self.K:
            raise ValidationError(f"index {given_index} out of range")
        if self.K == 1:
            raise ValidationError("cannot condition a single-source pmf")
        rest = [i for i in range(self.K) if i != given_index]
        sizes = tuple(self.alphabet_sizes[i] for i in rest)
        num: dict[tuple[int, ...], Fraction] = {}
        norm = Fraction(0)
        for out, q in zip(self.outcomes(), self.mass_exact):
            if out[given_index] != given_value:
                continue
            key = tuple(out[i] for i in rest)
            num[key] = num.get(key, Fraction(0)) + q
            norm += q
        if norm == 0:
            raise ValidationError(
                f"conditioning on zero-mass value x[{given_index}]={given_value}"
            )
        exact = [num.get(o, Fraction(0)) / norm
                 for o in itertools.product(*(range(s) for s in sizes))]
        return JointPmf.from_masses(sizes, exact)

    # --------------------------------------------------------------- hashing
    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(repr(self.alphabet_sizes).encode())
        for q in self.mass_exact:
            h.update(f"{q.numerator}/{q.denominator};".encode())
        return h.hexdigest()[:16]


# --------------------------------------------------------------------------
# pmf text format
# --------------------------------------------------------------------------

def parse_pmf_text(text: str) -> JointPmf:
    """Parse the structured pmf text format.

    Format: an ``alphabet s1 s2 ...`` line followed by one line per outcome,
    ``x1 x2 ... mass`` where mass is a decimal or an exact rational ``p/q``.
    Unlisted outcomes get mass 0.  ``#`` starts a comment.
    """
    sizes: tuple[int, ...] | None = None
    entries: dict[tuple[int, ...], Fraction] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "alphabet":
            if sizes is not None:
                raise ValidationError(f"line {lineno}: duplicate alphabet line")
            try:
                sizes = tuple(int(p) for p in parts[1:])
            except ValueError as e:
                raise ValidationError(f"line {lineno}: bad alphabet sizes") from e
            if not sizes or any(s < 1 for s in sizes):
                raise ValidationError(f"line {lineno}: alphabet sizes must be positive")
            continue
        if sizes is None:
            raise ValidationError(f"line {lineno}: outcome before alphabet line")
        if len(parts) != len(sizes) + 1:
            raise ValidationError(
                f"line {lineno}: expected {len(sizes)} coordinates plus a mass"
            )
        try:
            outcome = tuple(int(p) for p in parts[:-1])
            q = Fraction(parts[-1])
        except (ValueError, ZeroDivisionError) as e:
            raise ValidationError(f"line {lineno}: cannot parse {line!r}") from e
        if any(not 0 <= x < s for x, s in zip(outcome, sizes)):
            raise ValidationError(f"line {lineno}: outcome {outcome} out of alphabet")
        if q < 0:
            raise ValidationError(f"line {lineno}: negative mass")
        if outcome in entries:
            raise ValidationError(f"line {lineno}: duplicate outcome {outcome}")
        entries[outcome] = q
    if sizes is None:
        raise ValidationError("missing alphabet line")
    exact = [entries.get(o, Fraction(0))
             for o in itertools.product(*(range(s) for s in sizes))]
    if sum(exact) != 1:
        if abs(float(sum(exact)) - 1.0) > MASS_TOL:
            raise ValidationError(f"masses sum to {float(sum(exact))!r}, not 1")
    return JointPmf.from_masses(sizes, exact)


def load_pmf(path) -> JointPmf:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_pmf_text(fh.read())


def fig4_pair_source() -> JointPmf:
    """The binary pair source with P(0,0)=1/2 and 1/6 on the other cells."""
    return JointPmf.from_masses(
        (2, 2), [Fraction(1, 2), Fraction(1, 6), Fraction(1, 6), Fraction(1, 6)]
    )


# --------------------------------------------------------------------------
# information densities
# --------------------------------------------------------------------------

def info_density(
    pmf: JointPmf,
    subset: Sequence[int],
    conditioning: Sequence[int],
    outcome: Sequence[int],
) -> float:
    """-ln P(x_subset | x_conditioning), in nats.

    Returns +inf when the conditional probability of the outcome is zero.
    Raises ValidationError when the conditioning marginal itself has zero
    mass at the outcome (the conditional is undefined there).
    """
    subset = tuple(subset)
    conditioning = tuple(conditioning)
    if not subset:
        raise ValidationError("subset must be nonempty")
    if set(subset) & set(conditioning):
        raise ValidationError("subset and conditioning sets overlap")
    outcome = tuple(outcome)
    if len(outcome) != pmf.K:
        raise ValidationError("outcome must cover the full product alphabet")
    union = tuple(sorted(subset + conditioning))
    m_union = pmf.marginal(union)
    p_union = m_union.p([outcome[i] for i in union])
    if conditioning:
        m_cond = pmf.marginal(conditioning)
        p_cond = m_cond.p([outcome[i] for i in sorted(conditioning)])
        if p_cond == 0.0:
            raise ValidationError("zero conditioning-marginal mass at outcome")
        ratio = p_union / p_cond
    else:
        ratio = p_union
    if ratio == 0.0:
        return math.inf
    return -math.log(ratio)


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InfoMoments:
    """Every moment of the conditional-information vector a bound can ask for.

    Vector quantities are indexed by :func:`subset_order` of the K sources;
    entry for subset S refers to i(X_S | X_{complement}).  V is the entropy
    dispersion matrix of that vector.  EVc/ETc/EVc2/ETc2 are moments of the
    conditional varentropy / third-moment random variables V_c, T_c (the
    conditioning variable is the complement of S).
    """

    K: int
    subsets: tuple[tuple[int, ...], ...]
    H: np.ndarray
    V: np.ndarray
    T3: np.ndarray
    EVc: np.ndarray
    ETc: np.ndarray
    EVc2: np.ndarray
    ETc2: np.ndarray

    def index(self, subset: Sequence[int]) -> int:
        return self.subsets.index(tuple(sorted(subset)))

    def H_of(self, subset: Sequence[int]) -> float:
        return float(self.H[self.index(subset)])

    def V_of(self, subset: Sequence[int]) -> float:
        return float(self.V[self.index(subset), self.index(subset)])

    def T3_of(self, subset: Sequence[int]) -> float:
        return float(self.T3[self.index(subset)])


def _info_vector_arrays(pmf: JointPmf) -> tuple[np.ndarray, np.ndarray]:
    """Per-outcome matrix of conditional informations and the mass vector.

    Row j of the returned matrix holds i(x_S | x_{S^c}) for subset S =
    subset_order(K)[j], evaluated at every outcome of the product alphabet
    (columns).  Zero-mass outcomes get value 0 in the matrix; they carry no
    mass so every moment sum skips them (0 ln 0 = 0 convention).
    """
    K = pmf.K
    subs = subset_order(K)
    outs = pmf.outcomes()
    mass = pmf.mass
    mat = np.zeros((len(subs), len(outs)))
    for j, s in enumerate(subs):
        comp = tuple(i for i in range(K) if i not in s)
        if comp:
            m_comp = pmf.marginal(comp)
        for col, out in enumerate(outs):
            if mass[col] == 0.0:
                continue
            p_joint = mass[col]
            if comp:
                p_comp = m_comp.p([out[i] for i in comp])
                val = -math.log(p_joint / p_comp)
            else:
                val = -math.log(p_joint)
            mat[j, col] = val
    return mat, mass


def moments(pmf: JointPmf) -> InfoMoments:
    """All entropy/dispersion moments of a joint pmf, by direct summation."""
    K = pmf.K
    subs = subset_order(K)
    mat, mass = _info_vector_arrays(pmf)
    pos = mass > 0
    w = mass[pos]
    vecs = mat[:, pos]
    H = vecs @ w
    centered = vecs - H[:, None]
    V = (centered * w) @ centered.T
    T3 = (np.abs(centered) ** 3) @ w

    # conditional varentropy / third-moment random variables, per subset
    n_s = len(subs)
    EVc = np.zeros(n_s)
    ETc = np.zeros(n_s)
    EVc2 = np.zeros(n_s)
    ETc2 = np.zeros(n_s)
    outs = pmf.outcomes()
    for j, s in enumerate(subs):
        comp = tuple(i for i in range(K) if i not in s)
        if not comp:
            v = float(V[j, j])
            t = float(T3[j])
            EVc[j], ETc[j], EVc2[j], ETc2[j] = v, t, v * v, t * t
            continue
        m_comp = pmf.marginal(comp)
        acc = {"v": 0.0, "t": 0.0, "v2": 0.0, "t2": 0.0}
        for comp_out in itertools.product(*(range(pmf.alphabet_sizes[i]) for i in comp)):
            pb = m_comp.p(comp_out)
            if pb == 0.0:
                continue
            cols = [c for c, o in enumerate(outs)
                    if tuple(o[i] for i in comp) == comp_out and mass[c] > 0]
            pw = mass[cols] / pb
            iv = mat[j, cols]
            mu = float(iv @ pw)
            vc = float(((iv - mu) ** 2) @ pw)
            tc = float((np.abs(iv - mu) ** 3) @ pw)
            acc["v"] += pb * vc
            acc["t"] += pb * tc
            acc["v2"] += pb * vc * vc
            acc["t2"] += pb * tc * tc
        EVc[j], ETc[j] = acc["v"], acc["t"]
        EVc2[j], ETc2[j] = acc["v2"], acc["t2"]

    # clip tiny negative eigenvalue noise is left to consumers; V is symmetric
    V = (V + V.T) / 2.0
    return InfoMoments(
        K=K, subsets=tuple(subs), H=H, V=V, T3=T3,
        EVc=EVc, ETc=ETc, EVc2=EVc2, ETc2=ETc2,
    )


# --------------------------------------------------------------------------
# explicit achievability constants
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BeConstants:
    """Explicit constants of the random-coding achievability analysis (nats).

    Scalar-source constants: B = C0 T/V^{3/2} and C = 2(ln2/sqrt(2 pi V)+2B).
    Pair-source constants K1/K2/K12 use the unconditional conditional-info
    moments; the barred variants use E[V_c]-s and E[T_c]+s slacks; S1/S2 are
    the Chebyshev typicality budgets.  Fields are None when the variance they
    divide by is zero; ``get`` raises ZeroDispersionError for those.
    """

    C0: float
    s1: float | None = None
    s2: float | None = None
    B: float | None = None
    C: float | None = None
    K1: float | None = None
    K2: float | None = None
    K12: float | None = None
    K1_bar: float | None = None
    K2_bar: float | None = None
    S1: float | None = None
    S2: float | None = None

    def get(self, name: str) -> float:
        val = getattr(self, name)
        if val is None:
            raise ZeroDispersionError(
                f"constant {name} undefined for a zero-dispersion source; "
                "use the zero-varentropy region path"
            )
        return float(val)


def _k_constant(v: float, t: float, c0: float) -> float | None:
    if v <= 0.0:
        return None
    return 2.0 * LN2 / math.sqrt(2.0 * math.pi * v) + 2.0 * c0 * t / v ** 1.5


def be_constants(
    mom: InfoMoments,
    s1: float | None = None,
    s2: float | None = None,
    C0: float = C0_IID,
) -> BeConstants:
    """Evaluate the explicit constants for a 1- or 2-source moments record.

    For K=2 the slacks must satisfy s1 < E[Vc(X2|X1)] and s2 < E[Vc(X1|X2)];
    they default to half those expectations.
    """
    if mom.K == 1:
        v, t = float(mom.V[0, 0]), float(mom.T3[0])
        if v <= 0.0:
            return BeConstants(C0=C0)
        B = C0 * t / v ** 1.5
        C = 2.0 * (LN2 / math.sqrt(2.0 * math.pi * v) + 2.0 * B)
        return BeConstants(C0=C0, B=B, C=C)
    if mom.K != 2:
        raise ValidationError("be_constants supports K=1 or K=2 moment records")

    i1 = mom.index((0,))   # i(X1|X2)
    i2 = mom.index((1,))   # i(X2|X1)
    i12 = mom.index((0, 1))
    v_joint, t_joint = float(mom.V[i12, i12]), float(mom.T3[i12])
    B = C0 * t_joint / v_joint ** 1.5 if v_joint > 0 else None
    C = 2.0 * (LN2 / math.sqrt(2.0 * math.pi * v_joint) + 2.0 * B) if B is not None else None

    K1 = _k_constant(float(mom.V[i1, i1]), float(mom.T3[i1]), C0)
    K2 = _k_constant(float(mom.V[i2, i2]), float(mom.T3[i2]), C0)
    K12 = _k_constant(v_joint, t_joint, C0)

    evc_21, etc_21 = float(mom.EVc[i2]), float(mom.ETc[i2])   # (X2|X1)
    evc_12, etc_12 = float(mom.EVc[i1]), float(mom.ETc[i1])   # (X1|X2)
    if s1 is None:
        s1 = evc_21 / 2.0
    if s2 is None:
        s2 = evc_12 / 2.0

    K1_bar = K2_bar = S1 = S2 = None
    if evc_12 > 0:
        if not 0 < s2 < evc_12:
            raise ValidationError(f"s2 must lie in (0, E[Vc(X1|X2)]={evc_12!r})")
        K1_bar = (2.0 * LN2 / math.sqrt(2.0 * math.pi * (evc_12 - s2))
                  + 2.0 * C0 * (etc_12 + s2) / (evc_12 - s2) ** 1.5)
        S2 = (float(mom.EVc2[i1]) + float(mom.ETc2[i1])) / s2 ** 2
    if evc_21 > 0:
        if not 0 < s1 < evc_21:
            raise ValidationError(f"s1 must lie in (0, E[Vc(X2|X1)]={evc_21!r})")
        K2_bar = (2.0 * LN2 / math.sqrt(2.0 * math.pi * (evc_21 - s1))
                  + 2.0 * C0 * (etc_21 + s1) / (evc_21 - s1) ** 1.5)
        S1 = (float(mom.EVc2[i2]) + float(mom.ETc2[i2])) / s1 ** 2

    return BeConstants(
        C0=C0, s1=s1, s2=s2, B=B, C=C, K1=K1, K2=K2, K12=K12,
        K1_bar=K1_bar, K2_bar=K2_bar, S1=S1, S2=S2,
    )


def bentkus_constant(pmf: JointPmf, coords: Sequence[Sequence[int]] | None = None) -> float:
    """Constant 400 d^{1/4} beta_r / lambda_min(V_r)^{3/2} for the info vector.

    ``coords`` selects which subsets of the canonical enumeration enter the
    vector (default: all).  The rank reduction uses the eigenvectors of the
    nonzero eigenvalues; beta_r = E[\\|W\\|^3] is computed by exact summation.
    """
    mom = moments(pmf)
    mat, mass = _info_vector_arrays(pmf)
    if coords is not None:
        rows = [mom.index(s) for s in coords]
        mat = mat[rows, :]
        H = mom.H[rows]
    else:
        H = mom.H
    pos = mass > 0
    centered = mat[:, pos] - H[:, None]
    w = mass[pos]
    V = (centered * w) @ centered.T
    d = V.shape[0]
    evals, evecs = np.linalg.eigh((V + V.T) / 2.0)
    keep = evals > max(1e-12, 1e-12 * float(evals.max(initial=0.0)))
    if not np.any(keep):
        raise ZeroDispersionError("all-zero dispersion matrix has no Bentkus constant")
    Tmat = evecs[:, keep]
    Wvals = Tmat.T @ centered
    lam_min = float(evals[keep].min())
    beta_r = float((np.linalg.norm(Wvals, axis=0) ** 3) @ w)
    return 400.0 * d ** 0.25 * beta_r / lam_min ** 1.5


__all__ = [
    "C0_IID",
    "JointPmf",
    "InfoMoments",
    "BeConstants",
    "subset_order",
    "parse_pmf_text",
    "load_pmf",
    "fig4_pair_source",
    "info_density",
    "moments",
    "be_constants",
    "bentkus_constant",
]
