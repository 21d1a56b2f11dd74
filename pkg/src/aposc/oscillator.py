"""The asymmetric oscillator x'' + a x^+ - b x^- = f(t).

Closed-form base solutions C and S, generalized polar (action-angle)
coordinates, and two integrators: the Cartesian system in time and the
angle-form system in which theta plays the role of time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .apfun import APSeries, FrequencyBasis, RationalRelation, SpatialStructure, MultiIndex
from .errors import DomainError, DomainExitError, StiffnessError

__all__ = [
    "OscParams",
    "State",
    "AngleState",
    "Trajectory",
    "ThetaRun",
    "forcing",
    "base_C",
    "base_S",
    "energy_identity_residual",
    "to_action_angle",
    "from_action_angle",
    "energy",
    "r_star",
    "integrate_cartesian",
    "cartesian_section_map",
    "integrate_theta",
]


@dataclass(frozen=True)
class OscParams:
    """Stiffnesses a, b > 0 (a != b) and the derived constants.

    ``omega_tilde`` is (1/sqrt(a) + 1/sqrt(b))/2, ``rho_const`` is
    sqrt(2/(a omega_tilde)) and ``period`` = 2 pi omega_tilde is the period of C.
    """

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0) or not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise DomainError("a and b must be positive and finite")
        if self.a == self.b:
            raise DomainError("a == b is the linear oscillator; asymmetry is required")

    @property
    def omega_tilde(self) -> float:
        return 0.5 * (1.0 / math.sqrt(self.a) + 1.0 / math.sqrt(self.b))

    @property
    def rho_const(self) -> float:
        return math.sqrt(2.0 / (self.a * self.omega_tilde))

    @property
    def period(self) -> float:
        return 2.0 * math.pi * self.omega_tilde

    @property
    def t_a(self) -> float:
        """Half-width pi/(2 sqrt a) of the positive lobe of C."""
        return math.pi / (2.0 * math.sqrt(self.a))

    @property
    def c_sup(self) -> float:
        """max |C| = max(1, sqrt(a/b))."""
        return max(1.0, math.sqrt(self.a / self.b))

    @property
    def kink_angles(self) -> tuple:
        """Angles theta in (0, 2 pi) where C(omega_tilde theta) = 0 and S' jumps."""
        w = self.omega_tilde
        return (self.t_a / w, (self.period - self.t_a) / w)


@dataclass(frozen=True)
class State:
    x: float
    y: float
    t: float = 0.0


@dataclass(frozen=True)
class AngleState:
    theta: float
    r: float
    t: float = 0.0


def forcing(constant=0.0, cos=(), sin=(), relations=(), structure=None) -> APSeries:
    """Real forcing c + sum a cos(lam t) + sum b sin(lam t) as an APSeries.

    ``cos`` and ``sin`` are sequences of (frequency, amplitude).  Each distinct
    frequency gets its own basis index 1, 2, ... in order of first appearance.
    ``relations`` lists (frequency, Fraction plain, Fraction twopi) triples
    declaring exact values, e.g. (4/3, Fraction(4, 3), 0).
    """
    freqs = []
    for lam, _ in list(cos) + list(sin):
        if lam <= 0:
            raise DomainError("forcing frequencies must be positive")
        if lam not in freqs:
            freqs.append(float(lam))
    idx = {lam: i + 1 for i, lam in enumerate(freqs)}
    omega = {i: lam for lam, i in idx.items()} or {1: 1.0}
    rels = []
    for lam, plain, twopi in relations:
        rels.append(RationalRelation(MultiIndex.unit(idx[float(lam)]), plain, twopi))
    basis = FrequencyBasis(omega, relations=rels)
    if structure is None:
        structure = SpatialStructure.all_subsets(list(omega))
    return APSeries.trig(
        basis,
        structure,
        constant=constant,
        cos={MultiIndex.unit(idx[float(l)]): amp for l, amp in cos},
        sin={MultiIndex.unit(idx[float(l)]): amp for l, amp in sin},
    )


# ---------------------------------------------------------------------------
# base solutions
# ---------------------------------------------------------------------------


def _fold(t, p: OscParams):
    """Reduce t to u in [0, P/2] with C(t) = C(u) and S(t) = sign * S(u)."""
    P = p.period
    s = np.mod(np.asarray(t, dtype=float), P)
    upper = s > 0.5 * P
    u = np.where(upper, P - s, s)
    return u, np.where(upper, -1.0, 1.0)


def base_C(t, p: OscParams):
    """C(t): cos(sqrt(a) t) on |t| <= t_a, -sqrt(a/b) sin(sqrt(b)(|t| - t_a)) beyond, period P."""
    u, _ = _fold(t, p)
    sa, sb = math.sqrt(p.a), math.sqrt(p.b)
    out = np.where(u <= p.t_a, np.cos(sa * u), -math.sqrt(p.a / p.b) * np.sin(sb * (u - p.t_a)))
    return out if np.ndim(t) else float(out)


def base_S(t, p: OscParams):
    """S = C', odd and P-periodic."""
    u, sign = _fold(t, p)
    sa, sb = math.sqrt(p.a), math.sqrt(p.b)
    d = np.where(u <= p.t_a, -sa * np.sin(sa * u), -sa * np.cos(sb * (u - p.t_a)))
    out = sign * d
    return out if np.ndim(t) else float(out)


def _scalar_cs(p: OscParams):
    """Fast scalar (C(s), S(s)) for s in [0, P]."""
    sa, sb = math.sqrt(p.a), math.sqrt(p.b)
    ta, P, k = p.t_a, p.period, math.sqrt(p.a / p.b)
    half = 0.5 * P

    def cs(s):
        sign = 1.0
        if s > half:
            s, sign = P - s, -1.0
        if s <= ta:
            return math.cos(sa * s), -sign * sa * math.sin(sa * s)
        v = sb * (s - ta)
        return -k * math.sin(v), -sign * sa * math.cos(v)

    return cs


def energy_identity_residual(t_grid, p: OscParams) -> float:
    """max |S^2 + a (C^+)^2 + b (C^-)^2 - a| over the grid."""
    c = np.atleast_1d(base_C(np.asarray(t_grid, dtype=float), p))
    s = np.atleast_1d(base_S(np.asarray(t_grid, dtype=float), p))
    res = s**2 + p.a * np.maximum(c, 0.0) ** 2 + p.b * np.maximum(-c, 0.0) ** 2 - p.a
    return float(np.max(np.abs(res)))


# ---------------------------------------------------------------------------
# action-angle coordinates
# ---------------------------------------------------------------------------


def _phase(X, Y, p: OscParams) -> float:
    """s in [0, P) with (C(s), S(s)) = (X, Y) on the unit energy curve."""
    sa, sb = math.sqrt(p.a), math.sqrt(p.b)
    if X >= 0:
        s = math.atan2(-Y / sa, X) / sa
        return s % p.period
    return p.t_a + math.atan2(-X * math.sqrt(p.b / p.a), -Y / sa) / sb


def to_action_angle(s: State, p: OscParams) -> AngleState:
    """(x, y) -> (theta, r) with theta in [0, 2 pi)."""
    x, y = float(s.x), float(s.y)
    if x == 0.0 and y == 0.0:
        raise DomainError("the origin has no angle")
    w = p.omega_tilde
    r = 0.5 * w * (y * y + p.a * max(x, 0.0) ** 2 + p.b * max(-x, 0.0) ** 2)
    scale = p.rho_const * math.sqrt(r)
    theta = _phase(x / scale, y / scale, p) / w
    if theta >= 2 * math.pi:
        theta -= 2 * math.pi
    return AngleState(theta, r, s.t)


def from_action_angle(q: AngleState, p: OscParams) -> State:
    if not q.r >= 0:
        raise DomainError("action must be nonnegative")
    scale = p.rho_const * math.sqrt(q.r)
    s = p.omega_tilde * q.theta
    return State(scale * base_C(s, p), scale * base_S(s, p), q.t)


def energy(x, y, p: OscParams, f0: float = 0.0):
    """E = y^2/2 + a (x^+)^2/2 + b (x^-)^2/2 - f0 x (conserved for constant forcing f0)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * y**2 + 0.5 * p.a * np.maximum(x, 0) ** 2 + 0.5 * p.b * np.maximum(-x, 0) ** 2 - f0 * x


def r_star(p: OscParams, f: APSeries) -> float:
    """Threshold above which the angle-form system is well defined.

    Solves 1/omega_tilde - rho |C| |f| / (2 sqrt(r)) > 0 with |C| = max|C|
    and |f| the coefficient sum, then multiplies by 1.21 (10% on sqrt(r)).
    """
    fs = f.sup_bound()
    return 1.21 * (0.5 * p.rho_const * p.c_sup * fs * p.omega_tilde) ** 2


# ---------------------------------------------------------------------------
# Cartesian integration
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Samples of a Cartesian run; ``crossings`` are the located x = 0 times."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    crossings: np.ndarray
    nfev: int
    status: str = "ok"

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.x) + np.abs(self.y)

    def running_sup(self) -> np.ndarray:
        return np.maximum.accumulate(self.amplitude)

    def to_csv(self, path, stride: int = 1):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y"])
            for i in range(0, len(self.t), stride):
                w.writerow([repr(float(self.t[i])), repr(float(self.x[i])), repr(float(self.y[i]))])


def _side_rhs(side, p, fun):
    k = p.a if side > 0 else p.b

    def rhs(t, z):
        return np.array([z[1], -k * z[0] + fun(t)])

    return rhs


def _x_event(side):
    def ev(t, z):
        return z[0]

    ev.terminal = True
    ev.direction = -1.0 if side > 0 else 1.0
    return ev


def _section_event(t, z):
    return z[1]


_section_event.terminal = True
_section_event.direction = -1.0


def _initial_side(x, y, t, fun):
    if x != 0:
        return 1 if x > 0 else -1
    if y != 0:
        return 1 if y > 0 else -1
    return 1 if fun(t) >= 0 else -1


def _check_tol(tol):
    if not 1e-13 <= tol <= 1e-6:
        raise DomainError(f"tol={tol} outside [1e-13, 1e-6]")


def _run_cartesian(t0, z0, t_end, f, p, tol, t_eval=None, section=False, max_crossings=None):
    fun = f.as_function()
    z = np.array(z0, dtype=float)
    t = float(t0)
    side = _initial_side(z[0], z[1], t, fun)
    rhs = {1: _side_rhs(1, p, fun), -1: _side_rhs(-1, p, fun)}
    ev = {1: _x_event(1), -1: _x_event(-1)}
    scale = max(1.0, float(np.max(np.abs(z))))
    ts, xs, ys, cross = [], [], [], []
    nfev = 0
    # the section event is armed only after the orbit has visited x < 0
    armed = False
    t_eval = None if t_eval is None else np.asarray(t_eval, dtype=float)
    while t < t_end:
        events = [ev[side]]
        if section and armed and side > 0:
            events.append(_section_event)
        te = None
        if t_eval is not None:
            lo = np.searchsorted(t_eval, t, side="right")
            te = t_eval[lo:]
            # t_end is always requested so that sol.y[:, -1] is the end state
            te = np.append(te[te < t_end], t_end)
        sol = solve_ivp(
            rhs[side], (t, t_end), z, method="DOP853", rtol=tol, atol=tol * scale,
            events=events, t_eval=te,
        )
        nfev += sol.nfev
        if sol.status == -1:
            raise StiffnessError(f"integration failed at t={sol.t[-1]}: {sol.message}")
        if te is not None and sol.t.size:
            ts.append(sol.t)
            xs.append(sol.y[0])
            ys.append(sol.y[1])
        if sol.status == 0:
            z = sol.y[:, -1]
            t = t_end
            break
        if section and len(sol.t_events) > 1 and sol.t_events[1].size:
            t = float(sol.t_events[1][0])
            z = np.array(sol.y_events[1][0], dtype=float)
            z[1] = 0.0
            return t, z, ts, xs, ys, cross, nfev, "section"
        t_new = float(sol.t_events[0][0])
        if t_new <= t:
            raise StiffnessError(f"no progress at t={t}")
        t = t_new
        z = np.array([0.0, sol.y_events[0][0][1]])
        cross.append(t)
        side = -side
        if side < 0:
            armed = True
        if max_crossings is not None and len(cross) > max_crossings:
            raise StiffnessError("too many x = 0 crossings")
    return t, z, ts, xs, ys, cross, nfev, "ok"


def integrate_cartesian(s0: State, t_end: float, f: APSeries, p: OscParams, tol: float = 1e-10, stride: float | None = 0.05) -> Trajectory:
    """Integrate x' = y, y' = -a x^+ + b x^- + f(t) from s0 to t_end.

    The field is linear on each side of x = 0, so the run is split at the
    located crossings (terminal events) and each piece is integrated with an
    8th order Dormand-Prince scheme.  Samples are taken every ``stride`` time
    units (None keeps only the endpoints).
    """
    _check_tol(tol)
    if t_end < s0.t:
        raise DomainError("t_end precedes the initial time")
    if s0.x == 0 and s0.y == 0 and f.is_zero():
        ts = np.array([s0.t, t_end]) if stride is None else np.arange(s0.t, t_end + 0.5 * stride, stride)
        zeros = np.zeros_like(ts)
        return Trajectory(ts, zeros, zeros.copy(), np.array([]), 0)
    t_eval = None
    if stride is not None:
        n = int(math.floor((t_end - s0.t) / stride + 1e-9))
        t_eval = s0.t + stride * np.arange(1, n + 1)
    t, z, ts, xs, ys, cross, nfev, _ = _run_cartesian(s0.t, (s0.x, s0.y), t_end, f, p, tol, t_eval)
    T = np.concatenate([[s0.t]] + ts)
    X = np.concatenate([[s0.x]] + xs)
    Y = np.concatenate([[s0.y]] + ys)
    if T[-1] < t_end:
        T, X, Y = np.append(T, t), np.append(X, z[0]), np.append(Y, z[1])
    return Trajectory(T, X, Y, np.array(cross), nfev)


def cartesian_section_map(t0: float, r0: float, f: APSeries, p: OscParams, tol: float = 1e-12):
    """Return (t1, r1) of the next theta = 2 pi crossing, computed in Cartesian form.

    Independent of the angle-form integrator; used as its oracle.
    """
    _check_tol(tol)
    x0 = p.rho_const * math.sqrt(r0)
    horizon = t0 + 4 * p.period + 10.0
    t, z, *_rest, status = _run_cartesian(t0, (x0, 0.0), horizon, f, p, tol, section=True)
    if status != "section":
        raise StiffnessError("no section return within four unforced periods")
    r1 = to_action_angle(State(z[0], z[1], t), p).r
    return t, r1


# ---------------------------------------------------------------------------
# angle-form integration
# ---------------------------------------------------------------------------


@dataclass
class ThetaRun:
    """Output of the angle-form integrator.

    ``theta``, ``t``, ``r`` are samples (segment endpoints plus any requested
    angles); ``r_min`` is the smallest sampled action.
    """

    theta: np.ndarray
    t: np.ndarray
    r: np.ndarray
    nfev: int
    r_min: float
    exact: bool = False
    stats: dict = field(default_factory=dict)

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    @property
    def r1(self) -> float:
        return float(self.r[-1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "t", "r"])
            for th, t, r in zip(self.theta, self.t, self.r):
                w.writerow([repr(float(th)), repr(float(t)), repr(float(r))])


def integrate_theta(
    t0: float,
    r0: float,
    f: APSeries,
    p: OscParams,
    tol: float = 1e-12,
    theta_end: float = 2 * math.pi,
    theta_eval=None,
    rstar: float | None = None,
) -> ThetaRun:
    """Integrate the angle-form system from theta = 0 to ``theta_end``.

    With D = 1/omega_tilde - rho C(omega_tilde theta) f(t) / (2 sqrt(r)):

        dt/dtheta = 1/D,   dr/dtheta = omega_tilde rho S(omega_tilde theta) f(t) sqrt(r) / D.

    The unknowns are the deviations tau = t - t0 - omega_tilde theta and
    u = sqrt(r) - sqrt(r0), which keeps the small remainders resolvable at
    large r0.  The range is split at the kink angles of S.
    """
    _check_tol(tol)
    if not r0 > 0:
        raise DomainError("r0 must be positive")
    if rstar is None:
        rstar = r_star(p, f)
    if r0 < rstar:
        raise DomainExitError(f"r0={r0} below r_star={rstar}", 0.0)
    w = p.omega_tilde
    marks = [0.0] + [th for th in p.kink_angles if th < theta_end] + [theta_end]
    extra = np.asarray(theta_eval if theta_eval is not None else [], dtype=float)
    grid = np.unique(np.concatenate([marks, extra]))
    if f.is_zero():
        return ThetaRun(grid, t0 + w * grid, np.full(grid.shape, float(r0)), 0, float(r0), exact=True)
    fun = f.as_function()
    cs = _scalar_cs(p)
    rho = p.rho_const
    sq0 = math.sqrt(r0)

    def rhs(th, z):
        tau, u = z
        sq = sq0 + u
        ft = fun(t0 + w * th + tau)
        c, s = cs(w * th)
        D = 1.0 / w - 0.5 * rho * c * ft / sq
        # 1/D - w = w (1 - w D) / (w D), written without cancellation
        return (0.5 * rho * w * c * ft / sq / D, 0.5 * w * rho * s * ft / D)

    def exit_event(th, z):
        return (sq0 + z[1]) ** 2 - rstar

    exit_event.terminal = True
    exit_event.direction = -1.0

    z = np.zeros(2)
    out_th, out_tau, out_u = [0.0], [0.0], [0.0]
    nfev = 0
    for lo, hi in zip(marks[:-1], marks[1:]):
        te = grid[(grid > lo) & (grid <= hi)]
        sol = solve_ivp(
            rhs, (lo, hi), z, method="DOP853", rtol=tol, atol=tol * 1e-2,
            t_eval=te, events=exit_event if rstar > 0 else None,
        )
        nfev += sol.nfev
        if sol.status == -1:
            raise StiffnessError(sol.message)
        if sol.status == 1:
            th_exit = float(sol.t_events[0][0])
            raise DomainExitError(f"action fell below r_star at theta={th_exit}", th_exit)
        out_th.extend(sol.t)
        out_tau.extend(sol.y[0])
        out_u.extend(sol.y[1])
        z = sol.y[:, -1]
    th = np.array(out_th)
    t = t0 + w * th + np.array(out_tau)
    r = (sq0 + np.array(out_u)) ** 2
    return ThetaRun(th, t, r, nfev, float(r.min()), stats={"segments": len(marks) - 1})

