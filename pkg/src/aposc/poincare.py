"""Section map of the angle-form system, twist coefficients and the scaled map.

The section theta = 0 (mod 2 pi) is crossed once per revolution.  For large
actions the map is a perturbed twist map

    t1 = t0 + 2 omega_tilde pi + (omega_tilde^2 rho / 2) r0^(-1/2) L(t0) + O(1/r0),
    sqrt(r1) = sqrt(r0) + (omega_tilde^2 rho / 2) M(t0) + O(r0^(-1/2)),

with L and M the correlations of the forcing against C and S over one period.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .apfun import APSeries
from .errors import ConvergenceError, DomainError
from .oscillator import OscParams, base_C, base_S, integrate_theta, r_star

__all__ = [
    "PoincareResult",
    "TwistCoefficients",
    "MeanReport",
    "TwistReport",
    "ExpansionFit",
    "poincare_map",
    "section_density",
    "twist_constant",
    "base_transform",
    "twist_series",
    "lm_values",
    "twist_coefficients",
    "weighted_mean",
    "mean_values",
    "expected_mean_phi",
    "twist_condition",
    "delta_max",
    "scaled_map",
    "expansion_order",
    "jacobian_check",
]


@dataclass
class PoincareResult:
    t1: float
    r1: float
    r_min: float
    nfev: int
    exact: bool = False


def poincare_map(t0: float, r0: float, f: APSeries, p: OscParams, tol: float = 1e-12, rstar=None) -> PoincareResult:
    """One revolution theta: 0 -> 2 pi of the angle-form system."""
    if rstar is None:
        rstar = r_star(p, f)
    if r0 < 4 * rstar:
        raise DomainError(f"r0={r0} below 4 r_star={4 * rstar}")
    run = integrate_theta(t0, r0, f, p, tol=tol, rstar=rstar)
    return PoincareResult(run.t1, run.r1, run.r_min, run.nfev, run.exact)


def section_density(t, r, f: APSeries, p: OscParams):
    """D(t, r) = 1/omega_tilde - rho f(t) / (2 sqrt(r)), the d theta/dt rate on the section.

    The section map preserves the 2-form D dt ^ dr.
    """
    return 1.0 / p.omega_tilde - 0.5 * p.rho_const * f(t) / np.sqrt(r)


def twist_constant(p: OscParams) -> float:
    """omega_tilde^2 rho / 2, the factor linking L, M to Phi, Psi."""
    return 0.5 * p.omega_tilde**2 * p.rho_const


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def _pieces(p: OscParams):
    P, ta = p.period, p.t_a
    return ((0.0, ta), (ta, P - ta), (P - ta, P))


def _nodes(p: OscParams, n: int):
    x, w = leggauss(n)
    s, ws = [], []
    for lo, hi in _pieces(p):
        h = 0.5 * (hi - lo)
        s.append(lo + h * (x + 1))
        ws.append(h * w)
    return np.concatenate(s), np.concatenate(ws)


def _adaptive(integrand, p: OscParams, tol: float = 1e-11, n0: int = 16, n_max: int = 1024):
    """Piecewise Gauss-Legendre over one period with order doubling."""
    n = n0
    prev = integrand(*_nodes(p, n))
    while n < n_max:
        n *= 2
        cur = integrand(*_nodes(p, n))
        err = np.max(np.abs(cur - prev))
        if err <= tol * max(1.0, float(np.max(np.abs(cur)))):
            return cur, n
        prev = cur
    raise ConvergenceError(f"quadrature did not converge with {n_max} nodes per piece")


def base_transform(lam, p: OscParams, which: str = "C"):
    """int_0^P exp(i lam s) C(s) ds (or S(s) with which='S')."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    g = base_C if which == "C" else base_S

    def integrand(s, w):
        return np.exp(1j * np.multiply.outer(lam, s)) @ (w * g(s, p))

    val, _ = _adaptive(integrand, p, tol=1e-14)
    return val


def twist_series(f: APSeries, p: OscParams):
    """L and M as exact Fourier series on the basis of f.

    L_k = f_k Chat(lam_k) / omega_tilde and M_k = f_k Shat(lam_k) / omega_tilde,
    where Chat, Shat are the one-period transforms of C and S.
    """
    if f.has_profiles:
        raise DomainError("forcing must be a scalar series")
    ks = list(f.terms)
    lam = np.array([f.frequency(k) for k in ks])
    ch = base_transform(lam, p, "C") if ks else np.array([])
    sh = base_transform(lam, p, "S") if ks else np.array([])
    w = p.omega_tilde
    L = APSeries(f.basis, f.structure, {k: f.terms[k] * ch[i] / w for i, k in enumerate(ks)}, check=False)
    M = APSeries(f.basis, f.structure, {k: f.terms[k] * sh[i] / w for i, k in enumerate(ks)}, check=False)
    return L, M


@dataclass
class TwistCoefficients:
    """Tables of L, M, Phi = k L, Psi = -k M on a uniform t0 grid (k = omega_tilde^2 rho / 2)."""

    t0: np.ndarray
    L: np.ndarray
    M: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    min_abs_L: float
    nodes: int
    f: APSeries = field(repr=False)
    p: OscParams = field(repr=False)

    @property
    def twist_ok(self) -> bool:
        return self.min_abs_L > 1e-6

    def _design(self, t):
        _, lam, _, _ = self.f.fast_scalar()
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [np.ones_like(t)]
        for w in lam:
            cols += [np.cos(w * t), np.sin(w * t)]
        return np.column_stack(cols)

    def interpolate(self, name: str, t):
        """Evaluate a table off-grid by a least-squares fit on the spectrum of f.

        L and M carry exactly the frequencies of f, so this fit reproduces them
        to quadrature accuracy.
        """
        vals = getattr(self, name)
        coef, *_ = np.linalg.lstsq(self._design(self.t0), vals, rcond=None)
        out = self._design(t) @ coef
        return out if np.ndim(t) else float(out[0])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t0", "L", "M", "Phi", "Psi"])
            for row in zip(self.t0, self.L, self.M, self.Phi, self.Psi):
                w.writerow([repr(float(v)) for v in row])


def lm_values(f: APSeries, p: OscParams, t0, tol: float = 1e-11):
    """L(t0) and M(t0) by adaptive piecewise Gauss-Legendre quadrature.

    L(t0) = int_0^{2 pi} f(t0 + omega_tilde theta) C(omega_tilde theta) dtheta, and M with S.
    Returns (L, M, nodes per piece).
    """
    fun = f.as_function()
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    w = p.omega_tilde

    def integrand(s, ws):
        F = fun(np.add.outer(t0, s))
        if np.ndim(F) == 0:
            F = np.full((t0.size, s.size), float(F))
        return np.concatenate([F @ (ws * base_C(s, p)), F @ (ws * base_S(s, p))]) / w

    vals, n = _adaptive(integrand, p, tol=tol)
    return vals[: t0.size], vals[t0.size :], n


def twist_coefficients(f: APSeries, p: OscParams, grid_n: int = 256, t_span: float = 2000.0, tol: float = 1e-11) -> TwistCoefficients:
    """Tables of L, M, Phi, Psi on t0 = linspace(0, t_span, grid_n)."""
    if grid_n < 64:
        raise DomainError("grid_n must be at least 64")
    t0 = np.linspace(0.0, t_span, grid_n)
    L, M, n = lm_values(f, p, t0, tol)
    k = twist_constant(p)
    return TwistCoefficients(t0, L, M, k * L, -k * M, float(np.min(np.abs(L))), n, f, p)


# ---------------------------------------------------------------------------
# means and the twist predicate
# ---------------------------------------------------------------------------


def weighted_mean(values) -> float:
    """Bump-weighted average of uniform samples.

    The weight exp(-1/(x(1-x))) suppresses the boundary error of a plain
    average, so Bohr means of quasi-periodic samples converge much faster.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    x = (np.arange(n) + 0.5) / n
    with np.errstate(divide="ignore", over="ignore"):
        wt = np.exp(-1.0 / (x * (1 - x)))
    return float(np.dot(wt, v) / wt.sum())


def expected_mean_phi(f: APSeries, p: OscParams) -> float:
    """f0 omega_tilde rho sqrt(a) (1/a - 1/b), f0 the constant coefficient of f."""
    f0 = complex(f.constant_term).real
    return f0 * p.omega_tilde * p.rho_const * math.sqrt(p.a) * (1 / p.a - 1 / p.b)


@dataclass
class MeanReport:
    mean_phi: float
    mean_psi: float
    expected_phi: float
    drift_phi: float
    drift_psi: float

    @property
    def psi_zero(self) -> bool:
        return abs(self.mean_psi) <= 1e-8

    @property
    def phi_matches(self) -> bool:
        return abs(self.mean_phi - self.expected_phi) <= 1e-8


def mean_values(coeffs: TwistCoefficients) -> MeanReport:
    """Bohr means of Phi and Psi; drift is the change from half to full grid."""
    half = coeffs.t0.size // 2
    mphi, mpsi = weighted_mean(coeffs.Phi), weighted_mean(coeffs.Psi)
    return MeanReport(
        mphi,
        mpsi,
        expected_mean_phi(coeffs.f, coeffs.p),
        abs(mphi - weighted_mean(coeffs.Phi[:half])),
        abs(mpsi - weighted_mean(coeffs.Psi[:half])),
    )


@dataclass
class TwistReport:
    min_abs_L: float
    passed: bool
    grid_n: int
    history: list
    sign_change: bool = False
    threshold: float = 1e-6


def twist_condition(f: APSeries, p: OscParams, grid_n: int = 256, t_span: float = 2000.0, max_grid: int = 1 << 16) -> TwistReport:
    """min |L| > 1e-6 on a grid doubled until the minimum is stable within 1%.

    L is continuous, so a sign change between grid points proves a zero; the
    predicate then fails at once with ``sign_change`` set.
    """
    history = []
    n = grid_n
    while True:
        c = twist_coefficients(f, p, n, t_span)
        history.append((n, c.min_abs_L))
        if np.any(np.sign(c.L[1:]) != np.sign(c.L[:-1])):
            return TwistReport(c.min_abs_L, False, n, history, sign_change=True)
        if len(history) > 1:
            prev = history[-2][1]
            if abs(c.min_abs_L - prev) <= 0.01 * max(prev, 1e-300):
                break
        if 2 * n > max_grid:
            break
        n *= 2
    m = history[-1][1]
    return TwistReport(m, m > 1e-6, n, history)


# ---------------------------------------------------------------------------
# scaled map and expansion remainders
# ---------------------------------------------------------------------------


def delta_max(p: OscParams, f: APSeries) -> float:
    """Largest delta with delta^-2 v^-2 >= 4 r_star for all v in [1, 2]."""
    rs = r_star(p, f)
    return math.inf if rs == 0 else 1.0 / (4.0 * math.sqrt(rs))


def scaled_map(t0: float, v0: float, delta: float, f: APSeries, p: OscParams, tol: float = 1e-12):
    """Section map in the variables r = delta^-2 v^-2; returns (t1, v1)."""
    if not 0 < delta <= delta_max(p, f):
        raise DomainError(f"delta={delta} outside (0, delta_max={delta_max(p, f)}]")
    if not 1 <= v0 <= 2:
        raise DomainError(f"v0={v0} outside [1, 2]")
    r0 = 1.0 / (delta * v0) ** 2
    res = poincare_map(t0, r0, f, p, tol)
    if res.exact:
        return res.t1, float(v0)
    return res.t1, 1.0 / (delta * math.sqrt(res.r1))


@dataclass
class ExpansionFit:
    """Remainders of the first-order expansion along an r ladder."""

    r: np.ndarray
    res_t: np.ndarray
    res_sqrt_r: np.ndarray
    slope_t: float
    slope_sqrt_r: float
    exact_t: bool
    exact_sqrt_r: bool

    def rows(self):
        return [
            {"rung": i, "r0": float(r), "residual_t": float(a), "residual_sqrt_r": float(b),
             "slope_t": self.slope_t, "slope_sqrt_r": self.slope_sqrt_r}
            for i, (r, a, b) in enumerate(zip(self.r, self.res_t, self.res_sqrt_r))
        ]


def _slope(r, res, floor):
    if np.all(res <= floor):
        return float("nan"), True
    keep = res > floor
    if keep.sum() < 2:
        return float("nan"), False
    return float(np.polyfit(np.log(r[keep]), np.log(res[keep]), 1)[0]), False


def expansion_order(f: APSeries, p: OscParams, r_ladder, t0_samples=None, tol: float = 1e-13) -> ExpansionFit:
    """Fit log-remainder against log r for the t1 and sqrt(r1) expansions.

    The residual at each rung is the maximum over ``t0_samples``.  Residuals
    at the round-off floor are flagged exact and get a NaN slope.
    """
    r = np.asarray(sorted(r_ladder), dtype=float)
    if r.size < 3 or math.log10(r[-1] / r[0]) < 3 - 1e-9:
        raise DomainError("r ladder must have at least 3 rungs spanning 3 decades")
    if r[0] < 4 * r_star(p, f):
        raise DomainError("r ladder dips below 4 r_star")
    if t0_samples is None:
        t0_samples = np.linspace(0.0, 10.0, 7)
    t0_samples = np.asarray(t0_samples, dtype=float)
    Ls, Ms = twist_series(f, p)
    L0, M0 = Ls(t0_samples), Ms(t0_samples)
    k = twist_constant(p)
    beta = p.period
    rt, rr = [], []
    for r0 in r:
        et, er = 0.0, 0.0
        for t0, l0, m0 in zip(t0_samples, L0, M0):
            res = poincare_map(t0, r0, f, p, tol)
            et = max(et, abs((res.t1 - t0 - beta) - k * l0 / math.sqrt(r0)))
            er = max(er, abs((math.sqrt(res.r1) - math.sqrt(r0)) - k * m0))
        rt.append(et)
        rr.append(er)
    rt, rr = np.array(rt), np.array(rr)
    st, ex_t = _slope(r, rt, 1e-12)
    sr, ex_r = _slope(r, rr, 1e-9)
    return ExpansionFit(r, rt, rr, st, sr, ex_t, ex_r)


def jacobian_check(t0: float, r0: float, f: APSeries, p: OscParams, tol: float = 1e-13, h_t: float = 1e-4, h_r_rel: float = 1e-5):
    """Central-difference Jacobian of the section map and its density defect.

    Returns (det J, D(t0, r0) / D(t1, r1)).  The two agree when the map
    preserves D dt ^ dr.
    """
    def F(t, r):
        res = poincare_map(t, r, f, p, tol)
        return np.array([res.t1, res.r1])

    hr = h_r_rel * r0
    dt = (F(t0 + h_t, r0) - F(t0 - h_t, r0)) / (2 * h_t)
    dr = (F(t0, r0 + hr) - F(t0, r0 - hr)) / (2 * hr)
    det = dt[0] * dr[1] - dr[0] * dt[1]
    t1, r1 = F(t0, r0)
    ratio = section_density(t0, r0, f, p) / section_density(t1, r1, f, p)
    return float(det), float(ratio)
