"""
Truncated almost-periodic functions.

A function f(t) = F(omega t) is stored through the Fourier coefficients of its
shell function F on a finite window of frequency indices.  Every multi-index k
must be supported by some set A of a :class:`SpatialStructure`; the weight
[A] = 1 + sum_{i in A} log(1 + |i|)**rho drives the norms

    ||f||_{m,r} = sum_A |F_A|_r exp(m [A]).

The strip supremum |F_A|_r is replaced throughout by the coefficient majorant
sum |f_k| exp(r |k|), an upper bound that is computable in closed form.
Coefficients may also be polynomial profiles in an action variable y
(:class:`ActionProfile`), which gives the norm ||f||_{m,r,s}.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, Union

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly

from .errors import ConvergenceError, DomainError, InvariantError, MembershipError

__all__ = [
    "DROP_TOL",
    "MultiIndex",
    "RationalRelation",
    "FrequencyBasis",
    "SpatialStructure",
    "ActionProfile",
    "APSeries",
    "inner_frequency",
    "weight",
    "support_weight",
    "evaluate",
    "shell_sup_norm",
    "weighted_norm",
    "series_combine",
    "invert_near_identity",
    "inversion_residual",
]

#: coefficients smaller than this are pruned after products
DROP_TOL = 1e-14
REALITY_TOL = 1e-12


# ---------------------------------------------------------------------------
# multi-indices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class MultiIndex:
    """Finitely supported integer vector, stored as sorted (index, value) pairs."""

    entries: tuple = ()

    def __post_init__(self):
        items = dict()
        for i, v in self.entries:
            if int(i) != i or int(v) != v:
                raise DomainError(f"non-integer multi-index entry {(i, v)}")
            items[int(i)] = items.get(int(i), 0) + int(v)
        norm = tuple(sorted((i, v) for i, v in items.items() if v != 0))
        object.__setattr__(self, "entries", norm)

    @classmethod
    def of(cls, mapping: Mapping[int, int] | None = None) -> "MultiIndex":
        return cls(tuple((mapping or {}).items()))

    @classmethod
    def unit(cls, index: int, value: int = 1) -> "MultiIndex":
        return cls(((index, value),))

    @classmethod
    def zero(cls) -> "MultiIndex":
        return cls(())

    @property
    def support(self) -> frozenset:
        return frozenset(i for i, _ in self.entries)

    @property
    def norm(self) -> int:
        """|k| = sum of absolute entries."""
        return sum(abs(v) for _, v in self.entries)

    def as_dict(self) -> dict:
        return dict(self.entries)

    def __getitem__(self, index):
        return self.as_dict().get(index, 0)

    def __bool__(self):
        return bool(self.entries)

    def __neg__(self):
        return MultiIndex(tuple((i, -v) for i, v in self.entries))

    def __add__(self, other):
        return MultiIndex(self.entries + other.entries)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, n: int):
        return MultiIndex(tuple((i, n * v) for i, v in self.entries))

    __rmul__ = __mul__

    def is_positive(self) -> bool:
        """True if the first nonzero entry is positive (canonical half of +-k)."""
        return bool(self.entries) and self.entries[0][1] > 0

    def __str__(self):
        return ",".join(f"{i}:{v}" for i, v in self.entries)

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        text = text.strip()
        if not text or text == "0":
            return cls.zero()
        pairs = []
        for item in text.split(","):
            i, v = item.split(":")
            pairs.append((int(i), int(v)))
        return cls(tuple(pairs))


def _as_index(k) -> MultiIndex:
    if isinstance(k, MultiIndex):
        return k
    if isinstance(k, Mapping):
        return MultiIndex.of(k)
    if isinstance(k, str):
        return MultiIndex.parse(k)
    return MultiIndex(tuple(k))


# ---------------------------------------------------------------------------
# frequency basis
# ---------------------------------------------------------------------------

# An exactly known real number p + 2*pi*q with p, q rational.
ExactReal = tuple


@dataclass(frozen=True)
class RationalRelation:
    """Declared exact value <q, omega> = plain + 2*pi*twopi (both rational)."""

    q: MultiIndex
    plain: Fraction = Fraction(0)
    twopi: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "q", _as_index(self.q))
        object.__setattr__(self, "plain", Fraction(self.plain))
        object.__setattr__(self, "twopi", Fraction(self.twopi))

    @property
    def value(self) -> float:
        return float(self.plain) + 2 * math.pi * float(self.twopi)


class FrequencyBasis:
    """Finite window of a frequency sequence omega = (..., omega_l, ...).

    Parameters
    ----------
    omega : mapping
        index -> frequency.  Indices of the window without an entry are
        inactive; multi-indices touching them are rejected.
    window : (int, int), optional
        Inclusive index range.  Defaults to the span of ``omega``.
    relations : iterable of RationalRelation
        Exact rational relations among the frequencies.  They are the only
        source of exact resonance decisions.
    """

    RELATION_TOL = 1e-12

    def __init__(self, omega: Mapping[int, float], window=None, relations: Iterable = ()):
        omega = {int(i): float(w) for i, w in omega.items()}
        if not omega:
            raise DomainError("empty frequency basis")
        if window is None:
            window = (min(omega), max(omega))
        lo, hi = int(window[0]), int(window[1])
        if lo > hi:
            raise DomainError(f"bad window {window}")
        for i, w in omega.items():
            if not lo <= i <= hi:
                raise DomainError(f"frequency index {i} outside window {window}")
            if not math.isfinite(w):
                raise InvariantError(f"frequency omega_{i} is not finite")
        self.window = (lo, hi)
        self.omega = MappingProxyType(dict(sorted(omega.items())))
        self.relations = tuple(relations)
        for rel in self.relations:
            if not rel.q.support <= set(self.omega):
                raise DomainError(f"relation {rel.q} uses inactive indices")
            got = inner_frequency(rel.q, self)
            if abs(got - rel.value) > self.RELATION_TOL * max(1.0, abs(rel.value)):
                raise InvariantError(
                    f"declared relation <{rel.q},omega> = {rel.value!r} but frequencies give {got!r}"
                )
        self._rref = _relation_rref(self.relations)

    @property
    def indices(self) -> tuple:
        return tuple(self.omega)

    @property
    def sup_norm(self) -> float:
        return max(abs(w) for w in self.omega.values())

    def check(self, k: MultiIndex) -> None:
        for i in k.support:
            if i not in self.omega:
                raise DomainError(f"index {i} of k={k} is outside the active window")

    def exact_value(self, k: MultiIndex):
        """Exact <k, omega> as (plain, twopi) if k is in the span of the relations."""
        k = _as_index(k)
        vec = {i: Fraction(v) for i, v in k.entries}
        plain, twopi = Fraction(0), Fraction(0)
        for pivot, row, (rp, rt) in self._rref:
            c = vec.get(pivot, Fraction(0))
            if c == 0:
                continue
            for i, v in row.items():
                vec[i] = vec.get(i, Fraction(0)) - c * v
            plain += c * rp
            twopi += c * rt
        if any(v != 0 for v in vec.values()):
            return None
        return plain, twopi

    def scaled(self, factor: float) -> "FrequencyBasis":
        """Basis omega * factor; relations are kept only for factor == 1."""
        rel = self.relations if factor == 1 else ()
        return FrequencyBasis({i: w * factor for i, w in self.omega.items()}, self.window, rel)

    def __eq__(self, other):
        return (
            isinstance(other, FrequencyBasis)
            and self.window == other.window
            and dict(self.omega) == dict(other.omega)
        )

    def __hash__(self):
        return hash((self.window, tuple(self.omega.items())))

    def __reduce__(self):
        return (FrequencyBasis, (dict(self.omega), self.window, self.relations))

    def __repr__(self):
        return f"FrequencyBasis({dict(self.omega)}, window={self.window})"


def _relation_rref(relations):
    """Reduced row echelon form of the relation vectors over Q, values carried along."""
    rows = []
    for rel in relations:
        rows.append(({i: Fraction(v) for i, v in rel.q.entries}, (rel.plain, rel.twopi)))
    pivots = []
    for vec, (p, t) in rows:
        vec = dict(vec)
        for pivot, prow, (pp, pt) in pivots:
            c = vec.get(pivot, Fraction(0))
            if c:
                for i, v in prow.items():
                    vec[i] = vec.get(i, Fraction(0)) - c * v
                p, t = p - c * pp, t - c * pt
        vec = {i: v for i, v in vec.items() if v != 0}
        if not vec:
            if p != 0 or t != 0:
                raise InvariantError("inconsistent rational relations")
            continue
        pivot = min(vec)
        c = vec[pivot]
        vec = {i: v / c for i, v in vec.items()}
        p, t = p / c, t / c
        new = []
        for q, qrow, (qp, qt) in pivots:
            d = qrow.get(pivot, Fraction(0))
            if d:
                qrow = dict(qrow)
                for i, v in vec.items():
                    qrow[i] = qrow.get(i, Fraction(0)) - d * v
                qrow = {i: v for i, v in qrow.items() if v != 0}
                qp, qt = qp - d * p, qt - d * t
            new.append((q, qrow, (qp, qt)))
        new.append((pivot, vec, (p, t)))
        pivots = new
    return tuple(pivots)


def inner_frequency(k, basis: FrequencyBasis) -> float:
    """<k, omega> summed in ascending index order."""
    k = _as_index(k)
    basis.check(k)
    total = 0.0
    for i, v in k.entries:
        total += v * basis.omega[i]
    return total


# ---------------------------------------------------------------------------
# spatial structure and weights
# ---------------------------------------------------------------------------


def weight(A: Iterable[int], rho: float) -> float:
    """[A] = 1 + sum_{i in A} log(1 + |i|)**rho; [empty] = 1."""
    return 1.0 + sum(math.log1p(abs(i)) ** rho for i in sorted(A))


def _set_key(A):
    return (len(A), tuple(sorted(A)))


class SpatialStructure:
    """Finite family of finite index sets, closed under unions of intersecting members."""

    def __init__(self, sets: Iterable[Iterable[int]], rho_exponent: float = 3.0):
        if rho_exponent <= 2:
            raise DomainError("the weight exponent must exceed 2")
        family = {frozenset(int(i) for i in A) for A in sets}
        if frozenset() in family:
            raise DomainError("the empty set is not a member of a spatial structure")
        if not family:
            raise DomainError("empty spatial structure")
        self.rho = float(rho_exponent)
        self.sets = tuple(sorted(family, key=_set_key))
        self._weights = {A: weight(A, self.rho) for A in self.sets}
        for A, B in itertools.combinations(self.sets, 2):
            if A & B and (A | B) not in self._weights:
                raise InvariantError(
                    f"structure not union-closed: {sorted(A)} and {sorted(B)} intersect "
                    f"but their union is missing"
                )
        self._best = {}

    @classmethod
    def all_subsets(cls, indices: Iterable[int], rho_exponent: float = 3.0):
        idx = sorted(set(indices))
        sets = [c for n in range(1, len(idx) + 1) for c in itertools.combinations(idx, n)]
        return cls(sets, rho_exponent)

    @classmethod
    def singletons(cls, indices: Iterable[int], rho_exponent: float = 3.0):
        return cls([[i] for i in indices], rho_exponent)

    @classmethod
    def intervals(cls, lo: int, hi: int, rho_exponent: float = 3.0):
        sets = [range(i, j + 1) for i in range(lo, hi + 1) for j in range(i, hi + 1)]
        return cls(sets, rho_exponent)

    def weight(self, A) -> float:
        A = frozenset(A)
        if A in self._weights:
            return self._weights[A]
        return weight(A, self.rho)

    @property
    def indices(self) -> frozenset:
        return frozenset().union(*self.sets)

    def best_set(self, k) -> frozenset:
        """The member A attaining [[k]] (ties: lexicographically smallest A)."""
        k = _as_index(k)
        supp = k.support
        if supp in self._best:
            return self._best[supp]
        best, best_key = None, None
        for A in self.sets:
            if supp <= A:
                key = (self._weights[A], tuple(sorted(A)))
                if best_key is None or key < best_key:
                    best, best_key = A, key
        if best is None:
            raise MembershipError(f"supp k = {sorted(supp)} is contained in no set of the structure")
        self._best[supp] = best
        return best

    def contains(self, k) -> bool:
        try:
            self.best_set(k)
        except MembershipError:
            return False
        return True

    def support_weight(self, k) -> float:
        """[[k]] = min over A containing supp k of [A]; for k = 0 the minimum over all A."""
        return self._weights[self.best_set(k)]

    def __eq__(self, other):
        return isinstance(other, SpatialStructure) and self.sets == other.sets and self.rho == other.rho

    def __hash__(self):
        return hash((self.sets, self.rho))

    def __repr__(self):
        return f"SpatialStructure({[sorted(A) for A in self.sets]}, rho={self.rho})"


def support_weight(k, structure: SpatialStructure) -> float:
    return structure.support_weight(k)


# ---------------------------------------------------------------------------
# action profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActionProfile:
    """Polynomial coefficient l_k(y) on [y_lo, y_hi], stored in the Legendre basis.

    The basis is mapped affinely onto the interval.  ``halfwidth`` is the radius
    s of the complex disc |y - c| < s (c the interval midpoint) used by the
    majorant norm.
    """

    interval: tuple
    coeffs: np.ndarray
    halfwidth: float = 0.5
    max_degree: int = 8

    def __post_init__(self):
        lo, hi = map(float, self.interval)
        if not hi > lo:
            raise DomainError(f"bad profile interval {self.interval}")
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        c = npleg.legtrim(c, tol=0) if c.size > 1 else c
        if c.size - 1 > self.max_degree:
            raise DomainError(f"profile degree {c.size - 1} exceeds the maximum {self.max_degree}")
        if not np.all(np.isfinite(c)):
            raise InvariantError("non-finite profile coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "interval", (lo, hi))
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_power(cls, interval, power_coeffs, halfwidth=0.5, max_degree=8):
        """Build from monomial coefficients in y (lowest degree first)."""
        lo, hi = map(float, interval)
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        p = np.asarray(power_coeffs, dtype=complex)
        # y = c + h u
        shifted = np.zeros(len(p), dtype=complex)
        for j, pj in enumerate(p):
            shifted[: j + 1] += pj * nppoly.polypow([c, h], j)[: j + 1]
        return cls((lo, hi), npleg.poly2leg(shifted), halfwidth, max_degree)

    @classmethod
    def constant(cls, value, interval, halfwidth=0.5, max_degree=8):
        return cls(interval, [value], halfwidth, max_degree)

    @property
    def center(self) -> float:
        return 0.5 * (self.interval[0] + self.interval[1])

    @property
    def half_length(self) -> float:
        return 0.5 * (self.interval[1] - self.interval[0])

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def _u(self, y):
        return (np.asarray(y) - self.center) / self.half_length

    def __call__(self, y):
        return npleg.legval(self._u(y), self.coeffs)

    def derivative(self) -> "ActionProfile":
        if self.degree == 0:
            return self._new([0.0])
        return self._new(npleg.legder(self.coeffs) / self.half_length)

    def power_coeffs(self) -> np.ndarray:
        """Coefficients of the polynomial in (y - center)."""
        pu = npleg.leg2poly(self.coeffs)
        return pu / self.half_length ** np.arange(pu.size)

    def majorant(self) -> float:
        """sum_j |p_j| s**j, a bound for sup |l(y)| over |y - center| <= s."""
        p = self.power_coeffs()
        return float(np.sum(np.abs(p) * self.halfwidth ** np.arange(p.size)))

    def _new(self, coeffs):
        return ActionProfile(self.interval, coeffs, self.halfwidth, self.max_degree)

    def _compatible(self, other):
        if self.interval != other.interval or self.halfwidth != other.halfwidth:
            raise DomainError("profiles live on different intervals")

    def __add__(self, other):
        if isinstance(other, ActionProfile):
            self._compatible(other)
            return self._new(npleg.legadd(self.coeffs, other.coeffs))
        return self._new(npleg.legadd(self.coeffs, [other]))

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, ActionProfile):
            self._compatible(other)
            return self._new(npleg.legmul(self.coeffs, other.coeffs))
        return self._new(self.coeffs * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._new(self.coeffs / scalar)

    def conjugate(self):
        return self._new(np.conj(self.coeffs))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def close_to(self, other, atol) -> bool:
        n = max(self.coeffs.size, other.coeffs.size)
        a = np.zeros(n, complex)
        b = np.zeros(n, complex)
        a[: self.coeffs.size] = self.coeffs
        b[: other.coeffs.size] = other.coeffs
        return bool(np.all(np.abs(a - b) <= atol))

    def __eq__(self, other):
        return (
            isinstance(other, ActionProfile)
            and self.interval == other.interval
            and self.halfwidth == other.halfwidth
            and self.coeffs.shape == other.coeffs.shape
            and bool(np.all(self.coeffs == other.coeffs))
        )

    __hash__ = None


Coefficient = Union[complex, ActionProfile]


def _coef_abs(c) -> float:
    return c.majorant() if isinstance(c, ActionProfile) else abs(c)


def _coef_conj(c):
    return c.conjugate() if isinstance(c, ActionProfile) else complex(c).conjugate()


def _coef_small(c, tol) -> bool:
    if isinstance(c, ActionProfile):
        return c.max_abs() < tol
    return abs(c) < tol


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


class APSeries:
    """Finite Fourier series sum_k f_k exp(i <k, omega> t) of a real function.

    Coefficients are complex scalars or :class:`ActionProfile` objects (in
    which case the series depends on an action variable y as well).  Terms are
    kept sorted by multi-index so every sum runs in a fixed order.
    """

    def __init__(self, basis: FrequencyBasis, structure: SpatialStructure, terms=None, check=True):
        self.basis = basis
        self.structure = structure
        raw = {}
        for k, c in (terms or {}).items():
            k = _as_index(k)
            if not isinstance(c, ActionProfile):
                c = complex(c)
            raw[k] = raw[k] + c if k in raw else c
        profiles = [c for c in raw.values() if isinstance(c, ActionProfile)]
        if profiles:
            ref = profiles[0]
            raw = {
                k: (c if isinstance(c, ActionProfile) else ActionProfile.constant(c, ref.interval, ref.halfwidth, ref.max_degree))
                for k, c in raw.items()
            }
        self.terms = MappingProxyType(dict(sorted(raw.items())))
        self.has_profiles = bool(profiles)
        if check:
            for k in self.terms:
                basis.check(k)
                structure.best_set(k)
            self._check_reality()
        self._arrays = None

    def __reduce__(self):
        return (APSeries, (self.basis, self.structure, dict(self.terms), False))

    # -- construction helpers ------------------------------------------------

    @classmethod
    def zero(cls, basis, structure):
        return cls(basis, structure, {})

    @classmethod
    def constant(cls, value, basis, structure):
        return cls(basis, structure, {MultiIndex.zero(): value})

    @classmethod
    def trig(cls, basis, structure, constant=0.0, cos=None, sin=None):
        """Real series c + sum a_k cos<k,omega>t + sum b_k sin<k,omega>t."""
        terms = {}

        def put(k, c):
            terms[k] = terms.get(k, 0) + c

        if constant:
            put(MultiIndex.zero(), constant)
        for k, amp in (cos or {}).items():
            k = _as_index(k)
            put(k, 0.5 * amp)
            put(-k, 0.5 * amp)
        for k, amp in (sin or {}).items():
            k = _as_index(k)
            put(k, -0.5j * amp)
            put(-k, 0.5j * amp)
        return cls(basis, structure, terms)

    def _like(self, terms, check=False):
        return APSeries(self.basis, self.structure, terms, check=check)

    def _check_reality(self):
        scale = sum(_coef_abs(c) for c in self.terms.values())
        tol = REALITY_TOL * max(scale, 1.0)
        for k, c in self.terms.items():
            partner = self.terms.get(-k, 0.0 if not isinstance(c, ActionProfile) else None)
            if isinstance(c, ActionProfile):
                if partner is None:
                    partner = c._new([0.0])
                if not c.conjugate().close_to(partner, tol):
                    raise InvariantError(f"reality violated at k={k}")
            elif abs(complex(c).conjugate() - partner) > tol:
                raise InvariantError(f"reality violated at k={k}: f_k={c}, f_-k={partner}")

    # -- basic queries -------------------------------------------------------

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def coefficient(self, k):
        k = _as_index(k)
        return self.terms.get(k, 0.0)

    @property
    def constant_term(self):
        return self.terms.get(MultiIndex.zero(), 0.0)

    def is_zero(self) -> bool:
        return all(_coef_small(c, 1e-300) for c in self.terms.values())

    @property
    def active_indices(self) -> tuple:
        return tuple(sorted(set().union(*[k.support for k in self.terms]))) if self.terms else ()

    def frequency(self, k) -> float:
        return inner_frequency(k, self.basis)

    def _scalar_arrays(self):
        if self.has_profiles:
            raise DomainError("series has action profiles; evaluate with (t, y)")
        if self._arrays is None:
            ks = list(self.terms)
            lam = np.array([self.frequency(k) for k in ks], dtype=float)
            coef = np.array([self.terms[k] for k in ks], dtype=complex)
            self._arrays = (lam, coef)
        return self._arrays

    # -- evaluation ----------------------------------------------------------

    def __call__(self, t, y=None):
        return evaluate(self, t, y)

    def shell(self, theta: Mapping[int, float]):
        """F(theta) for an angle assignment index -> angle."""
        total = 0.0 + 0.0j
        for k, c in self.terms.items():
            phase = sum(v * theta[i] for i, v in k.entries)
            total += complex(c) * np.exp(1j * phase)
        return total.real

    def fast_scalar(self):
        """Return (c0, lam, A, B) with f(t) = c0 + sum A cos(lam t) + B sin(lam t)."""
        if self.has_profiles:
            raise DomainError("series has action profiles")
        c0 = complex(self.terms.get(MultiIndex.zero(), 0.0)).real
        lam, A, B = [], [], []
        for k, c in self.terms.items():
            if k.is_positive():
                w = self.frequency(k)
                lam.append(w)
                A.append(2.0 * c.real)
                B.append(-2.0 * c.imag)
        return c0, np.array(lam), np.array(A), np.array(B)

    def as_function(self):
        """Fast real evaluator t -> f(t) for scalar or array t."""
        c0, lam, A, B = self.fast_scalar()
        if lam.size == 0:
            return lambda t: c0 + 0.0 * np.asarray(t, dtype=float) if np.ndim(t) else c0
        if lam.size <= 4:
            terms = list(zip(lam.tolist(), A.tolist(), B.tolist()))
            cos, sin = math.cos, math.sin

            def f(t):
                if np.ndim(t):
                    t = np.asarray(t, dtype=float)
                    out = np.full(t.shape, c0)
                    for w, a, b in terms:
                        out = out + a * np.cos(w * t) + b * np.sin(w * t)
                    return out
                s = c0
                for w, a, b in terms:
                    s += a * cos(w * t) + b * sin(w * t)
                return s

            return f

        def f(t):
            ph = np.multiply.outer(np.asarray(t, dtype=float), lam)
            return c0 + np.cos(ph) @ A + np.sin(ph) @ B

        return f

    def sup_bound(self) -> float:
        """sum |f_k|, a bound for sup_t |f(t)|."""
        return float(sum(_coef_abs(c) for c in self.terms.values()))

    # -- algebra -------------------------------------------------------------

    def _check_compatible(self, other):
        if self.basis != other.basis or self.structure != other.structure:
            raise DomainError("series live on different bases or structures")

    def __add__(self, other):
        if not isinstance(other, APSeries):
            return self + APSeries.constant(other, self.basis, self.structure)
        return series_combine(self, other, "add")

    __radd__ = __add__

    def __neg__(self):
        return self._like({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, APSeries):
            return series_combine(self, other, "multiply")
        return self._like({k: c * other for k, c in self.terms.items()})

    __rmul__ = __mul__

    def derivative(self) -> "APSeries":
        """d/dt of the series (coefficients times i<k,omega>)."""
        terms = {}
        for k, c in self.terms.items():
            if k:
                terms[k] = c * (1j * self.frequency(k))
        return self._like(terms)

    def y_derivative(self) -> "APSeries":
        """d/dy of a profile series."""
        if not self.has_profiles:
            return APSeries.zero(self.basis, self.structure)
        return self._like({k: c.derivative() for k, c in self.terms.items()})

    def translate(self, shift: float) -> "APSeries":
        """t -> f(t + shift)."""
        return self._like(
            {k: c * np.exp(1j * self.frequency(k) * shift) for k, c in self.terms.items()}
        )

    def filter(self, predicate) -> "APSeries":
        return self._like({k: c for k, c in self.terms.items() if predicate(k)})

    def pruned(self, tol=DROP_TOL) -> "APSeries":
        return self._like({k: c for k, c in self.terms.items() if not _coef_small(c, tol)})

    def components(self) -> dict:
        """Group terms under the set attaining [[k]]; returns {A: APSeries}."""
        groups = {}
        for k, c in self.terms.items():
            A = self.structure.best_set(k)
            groups.setdefault(A, {})[k] = c
        return {A: self._like(g) for A, g in sorted(groups.items(), key=lambda kv: _set_key(kv[0]))}

    def max_coefficient_difference(self, other) -> float:
        keys = set(self.terms) | set(other.terms)
        out = 0.0
        for k in keys:
            a, b = self.coefficient(k), other.coefficient(k)
            d = a - b
            out = max(out, _coef_abs(d) if isinstance(d, ActionProfile) else abs(d))
        return out

    def __repr__(self):
        kind = "profile" if self.has_profiles else "scalar"
        return f"APSeries({len(self.terms)} {kind} terms, basis={self.basis!r})"


def evaluate(f: APSeries, t, y=None):
    """Evaluate f at time(s) t (and action y for profile series).

    The imaginary residual is checked against 1e-12 * sum|f_k| and discarded.
    """
    scale = max(f.sup_bound(), 1.0)
    if f.has_profiles:
        if y is None:
            raise DomainError("profile series needs an action value y")
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(t, y).shape, dtype=complex)
        for k, c in f.terms.items():
            out = out + c(y) * np.exp(1j * f.frequency(k) * t)
    else:
        lam, coef = f._scalar_arrays()
        t = np.asarray(t, dtype=float)
        if lam.size == 0:
            return np.zeros(t.shape) if t.ndim else 0.0
        out = np.exp(1j * np.multiply.outer(t, lam)) @ coef
    if np.max(np.abs(np.imag(out)), initial=0.0) > REALITY_TOL * scale:
        raise InvariantError("series evaluation has a non-negligible imaginary part")
    out = np.real(out)
    return float(out) if out.ndim == 0 else out


def shell_sup_norm(f: APSeries, r: float) -> float:
    """Majorant sum |f_k| exp(r|k|) of the strip supremum |F|_r.

    This is an upper bound, not the exact supremum over |Im theta| <= r.
    """
    if r < 0:
        raise DomainError("strip width must be nonnegative")
    return float(sum(_coef_abs(c) * math.exp(r * k.norm) for k, c in f.terms.items()))


def weighted_norm(f: APSeries, m: float, r: float) -> float:
    """||f||_{m,r} (or ||f||_{m,r,s} for profile coefficients) with majorant shell norms."""
    if m < 0 or r < 0:
        raise DomainError("norm parameters must be nonnegative")
    total = 0.0
    for A, fA in f.components().items():
        total += shell_sup_norm(fA, r) * math.exp(m * f.structure.weight(A))
    return total


def series_combine(f: APSeries, g: APSeries, op: str, drop_tol: float = DROP_TOL) -> APSeries:
    """Coefficient-space sum or product (convolution) of two series."""
    f._check_compatible(g)
    if op == "add":
        terms = dict(f.terms)
        for k, c in g.terms.items():
            terms[k] = terms[k] + c if k in terms else c
        return APSeries(f.basis, f.structure, terms, check=False)
    if op != "multiply":
        raise DomainError(f"unknown operation {op!r}")
    terms = {}
    for (k1, c1), (k2, c2) in itertools.product(f.terms.items(), g.terms.items()):
        k = k1 + k2
        c = c1 * c2
        terms[k] = terms[k] + c if k in terms else c
    terms = {k: c for k, c in terms.items() if not _coef_small(c, drop_tol)}
    for k in terms:
        f.structure.best_set(k)
    return APSeries(f.basis, f.structure, terms, check=True)


# ---------------------------------------------------------------------------
# inversion of tau = beta t + f(t)
# ---------------------------------------------------------------------------


def invert_near_identity(
    f: APSeries,
    beta: float,
    n_grid: int | None = None,
    max_order: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> APSeries:
    """Solve tau = beta t + f(t) for t = tau/beta + g(tau).

    g lives in the basis omega/beta.  Its shell function G satisfies the
    torus fixed point G(phi) = -F(phi + omega G(phi)) / beta, which is iterated
    on a uniform grid over the active angles and projected onto Fourier modes
    by FFT (the least-squares fit on a uniform torus grid).

    Raises
    ------
    DomainError
        if beta + f' is not positive on a sample grid.
    ConvergenceError
        if the contraction factor sum|f_k||<k,omega>|/beta is >= 1, the
        iteration stalls, or the composed identity misses ``tol``.
    """
    if beta <= 0:
        raise DomainError("beta must be positive")
    new_basis = f.basis.scaled(1.0 / beta)
    if f.has_profiles:
        raise DomainError("inversion is defined for scalar series")
    ts = np.linspace(0.0, 200.0, 4001)
    fp = f.derivative()
    if len(fp.terms) and np.min(beta + evaluate(fp, ts)) <= 0:
        raise DomainError("tau = beta t + f(t) is not monotone on the sample grid")
    contraction = fp.sup_bound() / beta
    if contraction >= 1:
        raise ConvergenceError(f"contraction factor {contraction:.3g} >= 1")

    active = f.active_indices
    d = len(active)
    if d == 0:
        g = APSeries(new_basis, f.structure, {MultiIndex.zero(): -f.constant_term / beta})
        return g
    if n_grid is None:
        n_grid = {1: 128, 2: 48, 3: 24}.get(d, 12)
    if max_order is None:
        max_order = n_grid // 2 - 1

    omega = np.array([f.basis.omega[i] for i in active])
    axes = [2 * np.pi * np.arange(n_grid) / n_grid] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)  # (..., d)
    ks = list(f.terms)
    kmat = np.array([[k[i] for i in active] for k in ks], dtype=float)  # (m, d)
    coef = np.array([f.terms[k] for k in ks], dtype=complex)

    def F(phi):
        return np.real(np.exp(1j * (phi @ kmat.T)) @ coef)

    G = np.zeros(grid.shape[:-1])
    for _ in range(max_iter):
        G_new = -F(grid + G[..., None] * omega) / beta
        delta = np.max(np.abs(G_new - G))
        G = G_new
        if delta < 1e-16 * max(1.0, np.max(np.abs(G))):
            break
    else:
        if delta > 1e-13:
            raise ConvergenceError(f"fixed point iteration stalled at step change {delta:.3g}")

    G_hat = np.fft.fftn(G) / G.size
    terms = {}
    modes = np.fft.fftfreq(n_grid, d=1.0 / n_grid).astype(int)
    for idx in itertools.product(range(n_grid), repeat=d):
        kv = [modes[j] for j in idx]
        if sum(abs(v) for v in kv) > max_order * d or max(abs(v) for v in kv) > max_order:
            continue
        c = G_hat[idx]
        if abs(c) < DROP_TOL:
            continue
        k = MultiIndex(tuple(zip(active, kv)))
        if not f.structure.contains(k):
            continue
        terms[k] = c
    # exact reality on the retained support
    sym = {}
    for k, c in terms.items():
        partner = terms.get(-k, 0.0)
        sym[k] = 0.5 * (c + np.conj(partner))
    for k in list(sym):
        if -k not in sym:
            sym[-k] = np.conj(sym[k])
    g = APSeries(new_basis, f.structure, sym)
    res = inversion_residual(f, beta, g)
    if res > tol:
        raise ConvergenceError(f"composed identity residual {res:.3g} exceeds {tol:.1g}")
    return g


def inversion_residual(f: APSeries, beta: float, g: APSeries, n: int = 1000, span: float = 200.0) -> float:
    """max |tau/beta + g(tau) - t| over n grid points, tau = beta t + f(t)."""
    t = np.linspace(-span / 2, span / 2, n)
    tau = beta * t + evaluate(f, t)
    back = tau / beta + evaluate(g, tau)
    return float(np.max(np.abs(back - t)))
