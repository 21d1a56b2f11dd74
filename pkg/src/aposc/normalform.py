"""Normal-form transformations for almost periodic twist maps.

A twist map model is

    x1 = x + beta + delta l(x, y) + delta f(x, y, delta),
    y1 = y + delta m(x, y) + delta g(x, y, delta).

Nonresonant modes of l and m are removed by one near-identity change of
variables built from the difference equations

    Phi(x + beta, y) - Phi(x, y) + h1(x, y) = 0,   Psi(x + beta, y) - Psi(x, y) + h2(x, y) = 0.

Resonant modes (those with <k, omega> beta in 2 pi Z) stay; for them a first
integral I and the frame (R, T, Omega, K, tau) turn the averaged map into a
twist map in the variables (tau, rho = I).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .apfun import ActionProfile, APSeries, MultiIndex, weighted_norm
from .dioph import ResonanceReport
from .errors import DomainError, HypothesisError, ResonanceError
from .oscillator import OscParams
from .poincare import lm_values, scaled_map, twist_constant, twist_series

__all__ = [
    "TwistMapModel",
    "Truncation",
    "HomologicalSolution",
    "ConjugatedMap",
    "DriftReport",
    "ResonantSplit",
    "ResonantIntegral",
    "ResonantFrame",
    "oscillator_model",
    "truncate_series",
    "solve_homological",
    "difference_residual",
    "conjugate_U",
    "measure_drift",
    "resonant_split",
    "oscillator_resonant_integral",
    "build_resonant_frame",
]


def _zero_hook(x, y, delta):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


def _eval(series: APSeries, x, y):
    if series is None or not series.terms:
        return np.zeros(np.broadcast(np.asarray(x, float), np.asarray(y, float)).shape)
    if series.has_profiles:
        return series(x, y)
    return series(x) + 0.0 * np.asarray(y, dtype=float)


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


@dataclass
class TwistMapModel:
    """The map M_delta with series l, m and perturbation hooks f, g.

    ``f`` and ``g`` are callables (x, y, delta) that must vanish at delta = 0.
    If ``exact`` is given, it is the map (x, y) -> (x1, y1) that the model
    stands for, and f, g are its deviations from the first-order part.
    """

    beta: float
    l: APSeries
    m: APSeries
    delta: float
    f: Callable = _zero_hook
    g: Callable = _zero_hook
    exact: Callable = None
    interval: tuple = (1.0, 2.0)

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        if self.l.basis != self.m.basis or self.l.structure != self.m.structure:
            raise DomainError("l and m must share basis and structure")
        if self.exact is None:
            probe = np.asarray(self.f(0.3, np.mean(self.interval), 0.0)), np.asarray(self.g(0.3, np.mean(self.interval), 0.0))
            if np.any(probe[0] != 0) or np.any(probe[1] != 0):
                raise DomainError("perturbations f, g must vanish at delta = 0")

    @property
    def basis(self):
        return self.l.basis

    @property
    def structure(self):
        return self.l.structure

    def first_order(self, x, y):
        """(x + beta + delta l, y + delta m)."""
        return (
            np.asarray(x) + self.beta + self.delta * _eval(self.l, x, y),
            np.asarray(y) + self.delta * _eval(self.m, x, y),
        )

    def __call__(self, x, y):
        if self.exact is not None:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
            out = np.array([self.exact(a, b) for a, b in zip(x, y)])
            return out[:, 0], out[:, 1]
        x1, y1 = self.first_order(x, y)
        return x1 + self.delta * self.f(x, y, self.delta), y1 + self.delta * self.g(x, y, self.delta)

    def l0(self, y):
        """Mean (constant-mode) part of l as a function of y."""
        return _eval(APSeries(self.basis, self.structure, {MultiIndex.zero(): self.l.constant_term}, check=False), 0.0, y)

    def m0(self, y):
        return _eval(APSeries(self.basis, self.structure, {MultiIndex.zero(): self.m.constant_term}, check=False), 0.0, y)


def _profile_series(series: APSeries, power: int, interval) -> APSeries:
    """Scalar series s(x) -> s(x) y**power with profile coefficients."""
    terms = {}
    for k, c in series.terms.items():
        pc = [0.0] * power + [c]
        terms[k] = ActionProfile.from_power(interval, pc)
    return APSeries(series.basis, series.structure, terms, check=False)


def oscillator_model(f: APSeries, p: OscParams, delta: float, interval=(1.0, 2.0), tol: float = 1e-12) -> TwistMapModel:
    """The scaled section map as a twist map model.

    l(t, v) = Phi(t) v and m(t, v) = Psi(t) v**2 with Phi = k L and Psi = -k M,
    k = omega_tilde^2 rho / 2; the exact section map supplies f and g.
    """
    L, M = twist_series(f, p)
    k = twist_constant(p)
    l = _profile_series(L * k, 1, interval)
    m = _profile_series(M * (-k), 2, interval)
    beta = p.period

    def exact(t0, v0):
        return scaled_map(float(t0), float(v0), delta, f, p, tol)

    def fh(x, y, d):
        x1, y1 = exact(x, y)
        return (x1 - x - beta) / d - _eval(l, x, y)

    def gh(x, y, d):
        x1, y1 = exact(x, y)
        return (y1 - y) / d - _eval(m, x, y)

    return TwistMapModel(beta, l, m, delta, fh, gh, exact, tuple(interval))


# ---------------------------------------------------------------------------
# truncation and the difference equations
# ---------------------------------------------------------------------------


@dataclass
class Truncation:
    """l = constant + head + tail, with the tail measured in the shrunken norm."""

    constant: APSeries
    head: APSeries
    tail: APSeries
    tail_norm: float
    tail_bound: float
    params: tuple


def truncate_series(l: APSeries, mu: float, rho: float, N: float, m: float | None = None, r: float | None = None) -> Truncation:
    """Keep the modes with 0 < mu [[k]] + rho |k| < N.

    The tail is measured in ||.||_{m - mu, r - rho} and bounded by
    exp(-N) ||l||_{m, r}.  Without m, r the norm parameters default to 2 mu
    and 2 rho.
    """
    m = 2 * mu if m is None else m
    r = 2 * rho if r is None else r
    if not (0 < mu < m and 0 < rho < r):
        raise DomainError("need 0 < mu < m and 0 < rho < r")
    const, head, tail = {}, {}, {}
    for k, c in l.terms.items():
        if not k:
            const[k] = c
            continue
        level = mu * l.structure.support_weight(k) + rho * k.norm
        (head if level < N else tail)[k] = c
    mk = lambda t: APSeries(l.basis, l.structure, t, check=False)
    tail_s = mk(tail)
    tail_norm = weighted_norm(tail_s, m - mu, r - rho)
    bound = math.exp(-N) * weighted_norm(l, m, r) if math.isfinite(N) else 0.0
    return Truncation(mk(const), mk(head), tail_s, tail_norm, bound, (mu, rho, N))


@dataclass
class HomologicalSolution:
    """Solutions Phi, Psi of the difference equations and their diagnostics."""

    Phi: APSeries
    Psi: APSeries
    beta: float
    divisor_floor: float
    residual: float
    truncation: tuple = None


def _divisor(lam, beta):
    return np.exp(1j * lam * beta) - 1.0


def _solve_one(h: APSeries, beta, divisor_min):
    terms, floor, res, scale = {}, math.inf, 0.0, 0.0
    for k, c in h.terms.items():
        if not k:
            if (c.max_abs() if isinstance(c, ActionProfile) else abs(c)) > 0:
                raise ResonanceError("constant mode k=0 cannot be removed (divisor 0)", k, 0.0)
            continue
        d = _divisor(h.frequency(k), beta)
        if abs(d) < divisor_min:
            raise ResonanceError(f"mode k={k} has divisor {abs(d):.3g} < {divisor_min:g}", k, abs(d))
        floor = min(floor, abs(d))
        phi = c * (-1.0 / d)
        terms[k] = phi
        # coefficient-space residual of Phi(x + beta) - Phi(x) + h
        r = phi * d + c
        if isinstance(r, ActionProfile):
            res = max(res, r.max_abs())
            scale = max(scale, c.max_abs())
        else:
            res = max(res, abs(r))
            scale = max(scale, abs(c))
    rel = res / scale if scale > 0 else 0.0
    return APSeries(h.basis, h.structure, terms, check=False), floor, rel


def solve_homological(h: APSeries, beta: float, divisor_min: float = 1e-8, h2: APSeries | None = None, truncation=None) -> HomologicalSolution:
    """Solve Phi(x + beta) - Phi(x) + h = 0 mode by mode (and Psi for h2).

    Phi_k = -h_k / (exp(i <k, omega> beta) - 1).  The reported residual is the
    largest relative coefficient defect of the equation, recomputed from the
    stored values.

    Raises
    ------
    ResonanceError
        naming the first k whose divisor is below ``divisor_min`` (the
        constant mode always has divisor 0 and must be split off first).
    """
    Phi, f1, r1 = _solve_one(h, beta, divisor_min)
    if h2 is None:
        Psi, f2, r2 = APSeries.zero(h.basis, h.structure), math.inf, 0.0
    else:
        Psi, f2, r2 = _solve_one(h2, beta, divisor_min)
    return HomologicalSolution(Phi, Psi, beta, min(f1, f2), max(r1, r2), truncation)


def difference_residual(sol: HomologicalSolution, h: APSeries, x, y=None) -> float:
    """max |Phi(x + beta, y) - Phi(x, y) + h(x, y)| at sample points."""
    yy = 0.0 if y is None else y
    a = _eval(sol.Phi, np.asarray(x) + sol.beta, yy) - _eval(sol.Phi, x, yy) + _eval(h, x, yy)
    return float(np.max(np.abs(a)))


# ---------------------------------------------------------------------------
# the conjugation U
# ---------------------------------------------------------------------------


def _lipschitz(series: APSeries) -> float:
    total = 0.0
    for k, c in series.terms.items():
        lam = abs(series.frequency(k))
        if isinstance(c, ActionProfile):
            total += c.majorant() * lam + c.derivative().majorant()
        else:
            total += abs(c) * lam
    return total


@dataclass
class ConjugatedMap:
    """Sampler of U o M_delta o U^-1 with U(x, y) = (x + delta Phi, y + delta Psi)."""

    model: TwistMapModel
    sol: HomologicalSolution
    contraction: float

    def U(self, x, y):
        d = self.model.delta
        return np.asarray(x) + d * _eval(self.sol.Phi, x, y), np.asarray(y) + d * _eval(self.sol.Psi, x, y)

    def U_inv(self, theta, r, tol: float = 1e-15, max_iter: int = 200):
        d = self.model.delta
        theta = np.asarray(theta, dtype=float)
        r = np.asarray(r, dtype=float)
        x, y = theta.copy(), r.copy()
        for _ in range(max_iter):
            xn = theta - d * _eval(self.sol.Phi, x, y)
            yn = r - d * _eval(self.sol.Psi, x, y)
            step = max(np.max(np.abs(xn - x)), np.max(np.abs(yn - y)))
            x, y = xn, yn
            if step <= tol * max(1.0, float(np.max(np.abs(theta)))):
                return x, y
        raise DomainError("fixed point for U^-1 did not converge")

    def __call__(self, theta, r):
        x, y = self.U_inv(theta, r)
        x1, y1 = self.model(x, y)
        return self.U(x1, y1)

    def l0(self, r):
        return self.model.l0(r)

    def l0_prime(self, r):
        c = self.model.l.constant_term
        if isinstance(c, ActionProfile):
            return np.real(c.derivative()(np.asarray(r, dtype=float)))
        return np.zeros(np.shape(r))


def conjugate_U(model: TwistMapModel, sol: HomologicalSolution) -> ConjugatedMap:
    """Build the conjugated sampler; U must be invertible by contraction (factor < 1/2)."""
    if sol.Phi.basis != model.basis:
        raise DomainError("solution and model live on different bases")
    lip = model.delta * max(_lipschitz(sol.Phi), _lipschitz(sol.Psi)) * 2
    if lip >= 0.5:
        raise DomainError(f"U is not a contraction perturbation (factor {lip:.3g} >= 1/2)")
    return ConjugatedMap(model, sol, lip)


@dataclass
class DriftReport:
    """x-dependent drift max |(x1 - x - beta)/delta - l0(y)|, |(y1 - y)/delta - m0(y)|."""

    drift_x: float
    drift_y: float

    @property
    def total(self) -> float:
        return max(self.drift_x, self.drift_y)


def measure_drift(mapping, model: TwistMapModel, xs, ys) -> DriftReport:
    """Sample ``mapping`` on the grid xs x ys and measure its x-dependent drift."""
    X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="ij")
    X, Y = X.ravel(), Y.ravel()
    x1, y1 = mapping(X, Y)
    dx = (x1 - X - model.beta) / model.delta - model.l0(Y)
    dy = (y1 - Y) / model.delta - model.m0(Y)
    return DriftReport(float(np.max(np.abs(dx))), float(np.max(np.abs(dy))))


# ---------------------------------------------------------------------------
# resonances
# ---------------------------------------------------------------------------


@dataclass
class ResonantSplit:
    tilde: APSeries
    bar: APSeries
    periodicity_defect: float


def resonant_split(l: APSeries, report: ResonanceReport, check_span: float = 50.0, n_check: int = 201) -> ResonantSplit:
    """Split l = l_tilde + l_bar with l_bar the exactly resonant modes (k = 0 included).

    A mode goes to l_bar iff <k, omega> beta is in 2 pi Z, decided by the
    report's exact arithmetic; l_bar is then beta-periodic in x, which is
    checked on a grid and returned as ``periodicity_defect``.
    """
    if report.basis is not None and report.basis != l.basis:
        raise DomainError("report and series use different bases")
    bar, tilde = {}, {}
    for k, c in l.terms.items():
        (bar if (not k or report.is_resonant(k)) else tilde)[k] = c
    mk = lambda t: APSeries(l.basis, l.structure, t, check=False)
    lbar = mk(bar)
    x = np.linspace(0.0, check_span, n_check)
    ys = [0.0] if not l.has_profiles else np.linspace(*next(iter(l.terms.values())).interval, 3)
    defect = 0.0
    for y in ys:
        defect = max(defect, float(np.max(np.abs(_eval(lbar, x + report.beta, y) - _eval(lbar, x, y)))))
    return ResonantSplit(mk(tilde), lbar, defect)


# ---------------------------------------------------------------------------
# periodic interpolation
# ---------------------------------------------------------------------------


class _TrigInterp:
    """Trigonometric interpolant of beta-periodic samples at t_j = j beta / n, n odd."""

    def __init__(self, values, period):
        n = len(values)
        if n % 2 == 0:
            raise DomainError("trigonometric interpolation needs an odd number of samples")
        self.period = float(period)
        self.n = n
        self.c = np.fft.rfft(np.asarray(values, dtype=float)) / n
        self.k = np.arange(self.c.size)
        self.w = np.where(self.k == 0, 1.0, 2.0)
        self.nu = 2 * np.pi / self.period

    def __call__(self, t, der: int = 0):
        t = np.asarray(t, dtype=float)
        ph = np.exp(1j * np.multiply.outer(t, self.k * self.nu))
        coef = self.w * self.c * (1j * self.k * self.nu) ** der
        return np.real(ph @ coef)


# ---------------------------------------------------------------------------
# the oscillator first integral
# ---------------------------------------------------------------------------


@dataclass
class ResonantIntegral:
    """I(t, v) = v exp(sigma int_0^t Psi_S / Phi_S) with the sign selected by residual."""

    sigma: int
    residuals: dict
    periodicity_defect: float
    beta: float
    Phi_S: _TrigInterp = field(repr=False)
    Psi_S: _TrigInterp = field(repr=False)
    expo: _TrigInterp = field(repr=False)
    drift: float = 0.0

    def I(self, t, v):
        return np.asarray(v) * self.expo(t)

    def dI_dt(self, t, v):
        return np.asarray(v) * self.expo(t, der=1)

    def dI_dv(self, t, v):
        return self.expo(t) + 0.0 * np.asarray(v)

    def lbar(self, t, v):
        return self.Phi_S(t) * np.asarray(v)

    def mbar(self, t, v):
        return self.Psi_S(t) * np.asarray(v) ** 2

    def dlbar_dv(self, t, v):
        return self.Phi_S(t) + 0.0 * np.asarray(v)


def _is_beta_periodic(f: APSeries, p: OscParams, tol=1e-12):
    for k in f.terms:
        if k:
            x = f.frequency(k) * p.omega_tilde
            if abs(x - round(x)) > tol:
                return False
    return True


def oscillator_resonant_integral(f_S: APSeries, p: OscParams, n_grid: int = 65, v_samples=(1.0, 1.5, 2.0)) -> ResonantIntegral:
    """First integral candidate for the averaged resonant oscillator map.

    Phi_S, Psi_S are computed by quadrature on t_j = j beta / n_grid
    (beta = 2 omega_tilde pi) and interpolated trigonometrically.  Both signs
    of the exponent are tested against l_bar dI/dt + m_bar dI/dv = 0 at
    off-grid points; the smaller residual wins.
    """
    if not _is_beta_periodic(f_S, p):
        raise DomainError("f_S must be beta-periodic: every omega_tilde <k, omega> must be an integer")
    beta = p.period
    tg = beta * np.arange(n_grid) / n_grid
    L, M, _ = lm_values(f_S, p, tg)
    k = twist_constant(p)
    Phi, Psi = k * L, -k * M
    if np.min(np.abs(Phi)) <= 1e-6:
        raise HypothesisError("Phi_S != 0", f"Phi_S vanishes on the grid (min |Phi_S| = {np.min(np.abs(Phi)):.3g})")
    phi_i, psi_i = _TrigInterp(Phi, beta), _TrigInterp(Psi, beta)
    q = Psi / Phi
    cq = np.fft.fft(q) / n_grid
    modes = np.fft.fftfreq(n_grid, d=1.0 / n_grid)
    nu = 2 * np.pi / beta
    q0 = cq[0].real
    # periodic part of the primitive, vanishing at t = 0
    prim = np.zeros(n_grid, dtype=complex)
    nz = modes != 0
    prim_c = np.zeros(n_grid, dtype=complex)
    prim_c[nz] = cq[nz] / (1j * modes[nz] * nu)
    prim = np.real(np.fft.ifft(prim_c) * n_grid)
    prim -= prim[0]
    E = q0 * tg + prim
    t_off = beta * (np.arange(n_grid) + 0.37) / n_grid
    Lo, Mo, _ = lm_values(f_S, p, t_off)
    Phi_o, Psi_o = k * Lo, -k * Mo
    results = {}
    for sigma in (1, -1):
        ex = _TrigInterp(np.exp(sigma * E), beta)
        res = 0.0
        for v in v_samples:
            lhs = Phi_o * v * v * ex(t_off, der=1) + Psi_o * v * v * ex(t_off)
            res = max(res, float(np.max(np.abs(lhs))))
        results[sigma] = (res, ex)
    sigma = min(results, key=lambda s: results[s][0])
    drift = abs(math.exp(sigma * q0 * beta) - 1.0)
    ex = results[sigma][1]
    per = float(np.max(np.abs(ex(t_off + beta) - ex(t_off)))) + drift
    return ResonantIntegral(sigma, {s: results[s][0] for s in results}, per, beta, phi_i, psi_i, ex, drift)


# ---------------------------------------------------------------------------
# the resonant frame
# ---------------------------------------------------------------------------


@dataclass
class ResonantFrame:
    """Tables and checks of the first-integral frame on the strip [a, b].

    ``checks`` maps a clause label to (measured value, passed).
    """

    beta: float
    bounds: tuple
    h_range: tuple
    theta_grid: np.ndarray
    h_grid: np.ndarray
    r_grid: np.ndarray
    R_table: np.ndarray
    T_table: np.ndarray
    Omega_table: np.ndarray
    K_table: np.ndarray
    tau_shift_residual: float
    pde_residual: float
    checks: dict
    R: Callable = field(repr=False)
    T: Callable = field(repr=False)
    Omega: Callable = field(repr=False)
    K: Callable = field(repr=False)
    tau: Callable = field(repr=False)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks.values())


def _fd(fun, x, h):
    return (fun(x + h) - fun(x - h)) / (2 * h)


def _periodic_integral(g, beta, tol=1e-13, n0=32, n_max=1 << 14):
    """int_0^beta g(s) ds for smooth beta-periodic g by the trapezoid rule with doubling."""
    n = n0
    prev = beta * np.mean(g(beta * np.arange(n) / n))
    while n < n_max:
        n *= 2
        cur = beta * np.mean(g(beta * np.arange(n) / n))
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    return cur


def build_resonant_frame(
    lbar: Callable,
    mbar: Callable,
    I: Callable,
    beta: float,
    bounds,
    dI_dtheta: Callable | None = None,
    dI_dr: Callable | None = None,
    dlbar_dr: Callable | None = None,
    n_theta: int = 64,
    n_h: int = 9,
    n_r: int = 5,
    pde_tol: float = 1e-8,
    shift_tol: float = 1e-8,
) -> ResonantFrame:
    """Verify the hypotheses on (l_bar, m_bar, I) and tabulate R, T, Omega, K, tau.

    Parameters
    ----------
    lbar, mbar, I : callables (theta, r) -> array, vectorized
    bounds : (a, a_tilde, b_tilde, b) with a < a_tilde < b_tilde < b
    dI_dtheta, dI_dr, dlbar_dr : optional exact derivatives; central
        differences are used otherwise.

    Raises
    ------
    HypothesisError
        naming the failed clause: "l_bar > 0", "dl_bar/dr > 0",
        "dI/dr > 0", "PDE", "nesting", "T > 0", "T' < 0" or "tau shift".
    """
    a, at, bt, b = map(float, bounds)
    if not a < at < bt < b:
        raise DomainError("bounds must satisfy a < a_tilde < b_tilde < b")
    eps_r = 1e-6 * max(1.0, b)
    if dI_dtheta is None:
        dI_dtheta = lambda th, r: _fd(lambda s: I(s, r), th, 1e-6 * max(1.0, beta))
    if dI_dr is None:
        dI_dr = lambda th, r: _fd(lambda s: I(th, s), r, eps_r)
    if dlbar_dr is None:
        dlbar_dr = lambda th, r: _fd(lambda s: lbar(th, s), r, eps_r)

    th = beta * np.arange(n_theta) / n_theta
    rr = np.linspace(a, b, 2 * n_r + 1)
    TH, RR = np.meshgrid(th, rr, indexing="ij")
    checks = {}

    def require(label, value, ok):
        checks[label] = (float(value), bool(ok))
        if not ok:
            raise HypothesisError(label, f"{label} fails (measured {value:.3g})")

    lv = lbar(TH, RR)
    require("l_bar > 0", np.min(lv), np.min(lv) > 0)
    dl = dlbar_dr(TH, RR)
    require("dl_bar/dr > 0", np.min(dl), np.min(dl) > 0)
    di = dI_dr(TH, RR)
    require("dI/dr > 0", np.min(di), np.min(di) > 0)
    pde = float(np.max(np.abs(lv * dI_dtheta(TH, RR) + mbar(TH, RR) * di)))
    require("PDE", pde, pde <= pde_tol)

    def extremum(r, sign):
        vals = sign * I(th, np.full(th.shape, r))
        j = int(np.argmin(vals))
        lo, hi = th[j] - beta / n_theta, th[j] + beta / n_theta
        res = optimize.minimize_scalar(lambda s: sign * float(I(np.array([s]), np.array([r]))[0]), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        return sign * min(float(res.fun), float(vals[j]))

    Imin = {r: extremum(r, 1.0) for r in (a, at, bt, b)}
    Imax = {r: extremum(r, -1.0) for r in (a, at, bt, b)}
    nest = [Imax[a] < Imin[at], Imin[at] <= Imax[at], Imax[at] < Imin[bt], Imin[bt] <= Imax[bt], Imax[bt] < Imin[b]]
    gap = min(Imin[at] - Imax[a], Imin[bt] - Imax[at], Imin[b] - Imax[bt])
    require("nesting", gap, all(nest))

    h_lo, h_hi = Imax[a], Imin[b]

    def R(theta, h):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        h = np.broadcast_to(np.asarray(h, dtype=float), theta.shape)
        out = np.empty(theta.shape)
        for idx in np.ndindex(theta.shape):
            t_, h_ = float(theta[idx]), float(h[idx])
            g = lambda r: float(I(np.array([t_]), np.array([r]))[0]) - h_
            out[idx] = optimize.brentq(g, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
        return out

    def T(h):
        return _periodic_integral(lambda s: 1.0 / lbar(s, R(s, np.full(s.shape, h))), beta)

    def Omega(h):
        return beta / T(h)

    def K(theta, r):
        hv = float(I(np.array([theta]), np.array([r]))[0])
        g = lambda s: 1.0 / float(lbar(np.array([s]), R(np.array([s]), np.array([hv])))[0])
        val, _ = integrate.quad(g, 0.0, theta, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    def tau(theta, r):
        hv = float(I(np.array([theta]), np.array([r]))[0])
        return Omega(hv) * K(theta, r)

    h_grid = np.linspace(h_lo, h_hi, n_h)
    T_tab = np.array([T(h) for h in h_grid])
    require("T > 0", np.min(T_tab), np.min(T_tab) > 0)
    dh = 1e-4 * (h_hi - h_lo)
    Tp = np.array([(T(min(h + dh, h_hi)) - T(max(h - dh, h_lo))) / (min(h + dh, h_hi) - max(h - dh, h_lo)) for h in h_grid])
    require("T' < 0", np.max(Tp), np.max(Tp) < 0)
    Om = beta / T_tab
    theta_tab = beta * np.arange(8) / 8
    R_tab = np.array([[R(t_, h)[0] for h in h_grid] for t_ in theta_tab])
    r_grid = np.linspace(at, bt, n_r)
    K_tab = np.array([[K(t_, r) for r in r_grid] for t_ in theta_tab])
    shift = 0.0
    for t_ in theta_tab[:4]:
        for r in r_grid:
            shift = max(shift, abs(tau(t_ + beta, r) - tau(t_, r) - beta))
    require("tau shift", shift, shift <= shift_tol)
    return ResonantFrame(
        beta, (a, at, bt, b), (h_lo, h_hi), theta_tab, h_grid, r_grid, R_tab, T_tab, Om, K_tab,
        shift, pde, checks, R, T, Omega, K, tau,
    )
