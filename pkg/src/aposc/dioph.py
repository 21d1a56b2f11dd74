"""Approximation functions, small-divisor margins and resonance bookkeeping.

Every scan is bounded by |k| <= K over the multi-indices supported by the
spatial structure.  Exact resonance is decided only through rational
relations declared on the frequency basis; floating point near-resonances are
reported separately and never promoted.
"""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, optimize

from .apfun import FrequencyBasis, MultiIndex, SpatialStructure, inner_frequency
from .errors import DomainError

__all__ = [
    "ApproximationFunction",
    "ApproxReport",
    "MarginReport",
    "ResonanceReport",
    "approx_validate",
    "enumerate_indices",
    "nonres_margin",
    "rotation_admissible",
    "scan_rotation_interval",
    "detect_resonances",
    "distribution_count",
]


class ApproximationFunction:
    """Nondecreasing Delta: [1, inf) -> [1, inf) with Delta(1) = 1.

    ``kind="default_exp_sqrt"`` is Delta(t) = exp(sqrt(t) - 1).
    ``kind="user_table"`` interpolates log Delta linearly between the table
    points ``parameters = [t0, D0, t1, D1, ...]`` and is constant past the end.
    """

    def __init__(self, kind: str = "default_exp_sqrt", parameters=()):
        self.kind = kind
        self.parameters = tuple(float(p) for p in parameters)
        if kind == "default_exp_sqrt":
            self._log_eval = lambda t: math.sqrt(t) - 1.0
        elif kind == "user_table":
            p = np.asarray(self.parameters).reshape(-1, 2)
            ts, ds = p[:, 0], p[:, 1]
            if np.any(np.diff(ts) <= 0) or np.any(ds < 1):
                raise DomainError("table must have increasing t and values >= 1")
            logs = np.log(ds)
            self._log_eval = lambda t: float(np.interp(t, ts, logs))
        else:
            raise DomainError(f"unknown approximation function kind {kind!r}")
        self.log = functools.lru_cache(maxsize=4096)(self._checked_log)

    def _checked_log(self, t: float) -> float:
        """log Delta(t), finite for every t >= 1 even when Delta overflows."""
        t = float(t)
        if not t >= 1:
            raise DomainError(f"approximation function evaluated at t={t} < 1")
        v = self._log_eval(t)
        if not math.isfinite(v):
            raise DomainError(f"log Delta({t}) is not finite")
        return v

    def __call__(self, t: float) -> float:
        try:
            return math.exp(self.log(float(t)))
        except OverflowError:
            raise DomainError(f"Delta({t}) overflows") from None

    def __repr__(self):
        return f"ApproximationFunction({self.kind!r})"


@dataclass
class ApproxReport:
    nondecreasing: bool
    quotient_decreasing: bool
    onset: float
    integral: float
    tail_estimate: float
    integral_converges: bool
    t_max: float

    @property
    def integral_with_tail(self) -> float:
        return self.integral + self.tail_estimate

    @property
    def passed(self) -> bool:
        return self.nondecreasing and self.quotient_decreasing and self.integral_converges


def _decade_integral(delta, lo, hi):
    # substitution t = e^u flattens the integrand on long ranges
    val, _ = integrate.quad(
        lambda u: delta.log(math.exp(u)) * math.exp(-u), math.log(lo), math.log(hi),
        epsabs=1e-14, epsrel=1e-12, limit=200,
    )
    return val


def approx_validate(delta: ApproximationFunction, t_max: float = 1e6, n_grid: int = 2000) -> ApproxReport:
    """Check the approximation-function conditions on [1, t_max].

    (i) Delta nondecreasing on a log grid; (ii) log Delta(t)/t nonincreasing
    from an onset t* on (t* is the refined argmax of the quotient);
    (iii) the integral of log Delta / t^2 over [1, t_max], with a geometric
    decade extrapolation of the tail.
    """
    if t_max < 10:
        raise DomainError("t_max must be at least 10")
    ts = np.geomspace(1.0, t_max, n_grid)
    logs = np.array([delta.log(t) for t in ts])
    nondecreasing = bool(np.all(np.diff(logs) >= -1e-15 * np.abs(logs[1:])))
    q = logs / ts
    i_max = int(np.argmax(q))
    tail_ok = bool(np.all(np.diff(q[i_max:]) <= 1e-15))
    onset = float(ts[i_max])
    if 0 < i_max < n_grid - 1:
        res = optimize.minimize_scalar(
            lambda t: -delta.log(t) / t,
            bounds=(ts[i_max - 1], ts[i_max + 1]),
            method="bounded",
            options={"xatol": 1e-10},
        )
        onset = float(res.x)
    elif i_max == 0:
        onset = 1.0
    decades = np.unique(np.concatenate([10.0 ** np.arange(0, math.floor(math.log10(t_max)) + 1), [t_max]]))
    pieces = [_decade_integral(delta, a, b) for a, b in zip(decades[:-1], decades[1:])]
    integral = float(sum(pieces))
    tail = 0.0
    converges = True
    last = _decade_integral(delta, t_max, 10 * t_max)
    prev = _decade_integral(delta, t_max / 10, t_max)
    if last > 0:
        ratio = last / prev if prev > 0 else math.inf
        converges = ratio < 1
        tail = last / (1 - ratio) if converges else math.inf
    return ApproxReport(nondecreasing, tail_ok, onset, integral, tail, converges, float(t_max))


# ---------------------------------------------------------------------------
# enumeration of multi-indices
# ---------------------------------------------------------------------------


def _vectors_on(indices, K):
    """All nonzero integer vectors on ``indices`` with every entry nonzero and |k| <= K."""
    n = len(indices)
    out = []

    def rec(pos, budget, acc):
        if pos == n:
            out.append(tuple(acc))
            return
        remaining = n - pos - 1
        for mag in range(1, budget - remaining + 1):
            for s in (1, -1):
                acc.append(s * mag)
                rec(pos + 1, budget - mag, acc)
                acc.pop()

    if n and K >= n:
        rec(0, K, [])
    return out


@functools.lru_cache(maxsize=64)
def _enumerate_cached(structure: SpatialStructure, K: int):
    supports = set()
    for A in structure.sets:
        for n in range(1, min(len(A), K) + 1):
            supports.update(frozenset(c) for c in itertools.combinations(sorted(A), n))
    out = []
    for supp in sorted(supports, key=lambda s: (len(s), sorted(s))):
        idx = sorted(supp)
        for vals in _vectors_on(idx, K):
            out.append(MultiIndex(tuple(zip(idx, vals))))
    return tuple(sorted(out, key=lambda k: (k.norm, k.entries)))


def enumerate_indices(structure: SpatialStructure, K: int):
    """Nonzero k in Z_0^Z with |k| <= K, in (|k|, entries) order."""
    if K < 0:
        raise DomainError("K must be nonnegative")
    return _enumerate_cached(structure, int(K))


def _exact_zero(basis, k) -> bool:
    ex = basis.exact_value(k)
    return ex is not None and ex[0] == 0 and ex[1] == 0


@dataclass
class MarginReport:
    margin: float
    argmin: MultiIndex
    K: int
    exact_zero: bool = False

    def __float__(self):
        return float(self.margin)


def nonres_margin(basis: FrequencyBasis, structure: SpatialStructure, delta: ApproximationFunction, K: int) -> MarginReport:
    """c* = min over 0 != k, |k| <= K of |<k,omega>| Delta([[k]]) Delta(|k|)."""
    if K < 1:
        raise DomainError("K must be at least 1")
    best = None
    for k in enumerate_indices(structure, K):
        if not k.support <= set(basis.omega):
            continue
        if _exact_zero(basis, k):
            return MarginReport(0.0, k, K, exact_zero=True)
        val = abs(inner_frequency(k, basis)) * delta(structure.support_weight(k)) * delta(k.norm)
        if best is None or val < best[0]:
            best = (val, k)
    if best is None:
        raise DomainError("no admissible multi-index with |k| <= K")
    return MarginReport(best[0], best[1], K)


def _defect(x: float) -> float:
    return abs(x - round(x))


def rotation_admissible(
    alpha: float,
    beta_total: float,
    basis: FrequencyBasis,
    structure: SpatialStructure,
    gamma: float,
    delta: ApproximationFunction,
    K: int,
    alpha_bounds=None,
) -> bool:
    """Nonresonance of a rotation beta_total = beta + delta*alpha.

    True iff for every 0 != k with |k| <= K the distance of
    <k,omega> beta_total / (2 pi) to the integers is at least
    gamma / (Delta([[k]]) Delta(|k|)).  With ``alpha_bounds = (a, b)`` the
    window condition a + gamma <= alpha <= b - gamma is checked too.
    """
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    if alpha_bounds is not None:
        lo, hi = alpha_bounds
        if not lo + gamma <= alpha <= hi - gamma:
            return False
    for k in enumerate_indices(structure, K):
        if not k.support <= set(basis.omega):
            continue
        x = inner_frequency(k, basis) * beta_total / (2 * math.pi)
        bound = gamma / (delta(structure.support_weight(k)) * delta(k.norm))
        if _defect(x) < bound:
            return False
    return True


@dataclass
class ScanResult:
    fraction: float
    admissible: list
    grid: np.ndarray
    gamma: float
    K: int


def scan_rotation_interval(
    alpha_lo: float,
    alpha_hi: float,
    grid_n: int,
    basis: FrequencyBasis,
    structure: SpatialStructure,
    gamma: float,
    delta: ApproximationFunction,
    K: int,
    beta: float = 0.0,
    delta_scale: float = 1.0,
) -> ScanResult:
    """Admissible fraction of a uniform alpha grid with beta_total = beta + delta_scale*alpha."""
    if not alpha_lo < alpha_hi:
        raise DomainError("empty alpha interval")
    if grid_n < 10:
        raise DomainError("grid_n must be at least 10")
    grid = np.linspace(alpha_lo, alpha_hi, grid_n)
    good = [
        float(a)
        for a in grid
        if rotation_admissible(a, beta + delta_scale * a, basis, structure, gamma, delta, K)
    ]
    return ScanResult(len(good) / grid_n, good, grid, gamma, K)


# ---------------------------------------------------------------------------
# resonances
# ---------------------------------------------------------------------------


@dataclass
class ResonanceReport:
    """Resonant multi-indices of a rotation beta up to order K.

    ``exact`` holds (k, j, defect) with <k,omega> beta = 2 pi j decided in
    exact rational arithmetic; ``near`` holds floating point near misses with
    defect <= tol; ``margin`` is the smallest defect among non-resonant k.
    """

    exact: list
    near: list
    margin: float
    K: int
    tol: float
    beta: float
    resonant_sets: tuple = ()
    basis: FrequencyBasis = field(default=None, repr=False)
    beta_exact: tuple = None

    def is_resonant(self, k) -> bool:
        """Exact resonance test for an arbitrary k (not limited to |k| <= K)."""
        if not k:
            return True
        return _exact_resonance(self.basis, k, self.beta_exact) is not None

    def records(self):
        """Rows with the fixed fields kind, k, j, defect, margin, K."""
        rows = []
        for kind, items in (("exact", self.exact), ("near", self.near)):
            for k, j, d in items:
                rows.append({"kind": kind, "k": str(k), "j": j, "defect": d, "margin": self.margin, "K": self.K})
        if not rows:
            rows.append({"kind": "none", "k": "", "j": "", "defect": "", "margin": self.margin, "K": self.K})
        return rows


def _exact_resonance(basis, k, beta_exact):
    """Integer j with <k,omega> beta = 2 pi j, decided exactly, else None."""
    ex = basis.exact_value(k)
    if ex is None:
        return None
    p, q = ex  # <k,omega> = p + 2 pi q
    if p == 0 and q == 0:
        return 0
    if beta_exact is None:
        return None
    bp, bq = beta_exact  # beta = bp + 2 pi bq
    # <k,omega> beta / (2 pi) = p bp / (2 pi) + p bq + q bp + 2 pi q bq
    if p * bp != 0 or q * bq != 0:
        return None
    val = p * bq + q * bp
    return int(val) if val.denominator == 1 else None


def detect_resonances(
    basis: FrequencyBasis,
    structure: SpatialStructure,
    beta: float,
    K: int,
    tol: float = 1e-9,
    beta_exact=None,
) -> ResonanceReport:
    """Scan 0 != k with |k| <= K for <k,omega> beta in 2 pi Z.

    Parameters
    ----------
    beta_exact : (Fraction, Fraction), optional
        beta = plain + 2 pi * twopi exactly.  Without it only relations with
        <k,omega> = 0 can be certified as exact resonances.
    """
    if K < 1:
        raise DomainError("K must be at least 1")
    if beta_exact is not None:
        bp, bq = Fraction(beta_exact[0]), Fraction(beta_exact[1])
        beta_exact = (bp, bq)
        if abs(float(bp) + 2 * math.pi * float(bq) - beta) > 1e-12 * max(1.0, abs(beta)):
            raise DomainError("beta_exact does not match beta")
    exact, near = [], []
    margin = math.inf
    res_supports = []
    for k in enumerate_indices(structure, K):
        if not k.support <= set(basis.omega):
            continue
        x = inner_frequency(k, basis) * beta
        j = round(x / (2 * math.pi))
        d = abs(x - 2 * math.pi * j)
        jex = _exact_resonance(basis, k, beta_exact)
        if jex is not None:
            exact.append((k, jex, 0.0))
            res_supports.append(k.support)
            continue
        if d <= tol:
            near.append((k, int(j), d))
        margin = min(margin, d)
    if near:
        warnings.warn(
            f"{len(near)} floating point near-resonances with defect <= {tol:g} (not promoted to exact)",
            RuntimeWarning,
            stacklevel=2,
        )
    sets = tuple(A for A in structure.sets if any(s <= A for s in res_supports))
    return ResonanceReport(exact, near, margin, K, tol, beta, sets, basis, beta_exact)


def distribution_count(structure: SpatialStructure, n: int, t: float) -> int:
    """N_n(t) = #{A in S : card A = n, [A] <= t}."""
    if n < 1:
        raise DomainError("n must be at least 1")
    return sum(1 for A in structure.sets if len(A) == n and structure.weight(A) <= t)
