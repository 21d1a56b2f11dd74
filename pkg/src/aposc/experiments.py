"""Experiment configuration and orchestration.

Boundedness ensembles, rotation numbers, invariant-curve fits on the scaled
section map, and the report bundle.
"""

from __future__ import annotations

import copy
import json
import math
import os
import platform
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .apfun import APSeries, FrequencyBasis, MultiIndex, SpatialStructure
from .dioph import ApproximationFunction, enumerate_indices, rotation_admissible
from .errors import ConfigError, DomainError, EscapeError
from .io import write_csv
from .oscillator import OscParams, State, forcing, integrate_cartesian
from .poincare import scaled_map, twist_condition

__all__ = [
    "DEFAULTS",
    "ExperimentConfig",
    "Check",
    "OrbitSummary",
    "BoundednessResult",
    "RotationEstimate",
    "CurveFit",
    "parse_real",
    "run_boundedness",
    "rotation_number",
    "section_orbit",
    "find_invariant_curve",
    "curve_invariance",
    "emit_report",
]


DEFAULTS = {
    "oscillator": {"a": 1.0, "b": 4.0},
    "forcing": {
        "constant": 1.0,
        "terms": [{"freq": "sqrt(2)", "amp": 0.3, "kind": "cos"}, {"freq": "sqrt(3)", "amp": 0.2, "kind": "cos"}],
    },
    "structure": {"kind": "all_subsets", "rho": 3.0},
    "dioph": {"K": 8, "gamma": [0.1, 0.01, 0.001], "tol": 1e-9, "grid_n": 200, "alpha": [0.5, 2.0]},
    "integrator": {"tol": 1e-9, "theta_tol": 1e-12, "stride": 0.05},
    "experiment": {
        "t_end": 1e4,
        "n_orbits": 20,
        "x0_range": [20.0, 100.0],
        "checkpoint_range": [1e2, 1e4],
        "delta": 1e-3,
        "t0": 0.0,
        "v0": 1.5,
        "n_iter": 500,
        "fit_order": 4,
        "fit_tol": 1e-5,
        "return_frequency": False,
        "r_ladder": [1e3, 1e4, 1e5, 1e6, 1e7],
        "grid_n": 256,
        "t_span": 2000.0,
        "resonant": {"freq": "4/3", "amp": 0.3, "bounds": [1.0, 2.5, 6.5, 17.0]},
    },
    "seed": 20240101,
    "out": "out",
}

_SECTIONS = ("oscillator", "forcing", "structure", "dioph", "integrator", "experiment")


def parse_real(value):
    """Parse a real given as a number, a fraction "p/q" or "sqrt(x)".

    Returns (float value, Fraction or None); the fraction is set only for
    exact rational input.
    """
    if isinstance(value, bool):
        raise ConfigError(f"not a real number: {value!r}")
    if isinstance(value, (int, float)):
        return float(value), None
    if isinstance(value, str):
        s = value.strip()
        m = re.fullmatch(r"sqrt\((.+)\)", s)
        if m:
            return math.sqrt(float(Fraction(m.group(1).strip()))), None
        try:
            q = Fraction(s)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse real {value!r}") from exc
        return float(q), q
    raise ConfigError(f"not a real number: {value!r}")


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass
class ExperimentConfig:
    """Validated configuration; ``raw`` keeps the merged JSON dictionary."""

    raw: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(_SECTIONS) - {"seed", "out"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        cfg = cls(_merge(DEFAULTS, data))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self):
        r = self.raw
        try:
            OscParams(float(r["oscillator"]["a"]), float(r["oscillator"]["b"]))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        for term in r["forcing"]["terms"]:
            if term.get("kind", "cos") not in ("cos", "sin"):
                raise ConfigError(f"forcing term kind must be cos or sin: {term}")
            lam, _ = parse_real(term["freq"])
            if lam <= 0:
                raise ConfigError("forcing frequencies must be positive")
            parse_real(term["amp"])
        if r["structure"]["kind"] not in ("all_subsets", "singletons"):
            raise ConfigError("structure kind must be all_subsets or singletons")
        if not float(r["structure"]["rho"]) > 2:
            raise ConfigError("structure rho must exceed 2")
        e = r["experiment"]
        if not 0 < float(e["delta"]) < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not 1 <= float(e["v0"]) <= 2:
            raise ConfigError("v0 must lie in [1, 2]")
        if int(e["n_orbits"]) < 1 or float(e["t_end"]) <= 0:
            raise ConfigError("ensemble needs n_orbits >= 1 and t_end > 0")
        tol = float(r["integrator"]["tol"])
        if not 1e-13 <= tol <= 1e-6:
            raise ConfigError("integrator tol must lie in [1e-13, 1e-6]")
        if int(r["dioph"]["K"]) < 0:
            raise ConfigError("dioph K must be nonnegative")
        if not isinstance(r["seed"], int):
            raise ConfigError("seed must be an integer")

    # -- derived objects -----------------------------------------------------

    @property
    def params(self) -> OscParams:
        return OscParams(float(self.raw["oscillator"]["a"]), float(self.raw["oscillator"]["b"]))

    def forcing(self) -> APSeries:
        fc = self.raw["forcing"]
        cos, sin, rels = [], [], []
        for term in fc["terms"]:
            lam, exact = parse_real(term["freq"])
            amp, _ = parse_real(term["amp"])
            (sin if term.get("kind", "cos") == "sin" else cos).append((lam, amp))
            if exact is not None and all(lam != r[0] for r in rels):
                rels.append((lam, exact, Fraction(0)))
        c0, _ = parse_real(fc.get("constant", 0.0))
        lams = []
        for lam, _ in cos + sin:
            if lam not in lams:
                lams.append(lam)
        rho = float(self.raw["structure"]["rho"])
        idx = list(range(1, max(len(lams), 1) + 1))
        if self.raw["structure"]["kind"] == "singletons":
            structure = SpatialStructure.singletons(idx, rho)
        else:
            structure = SpatialStructure.all_subsets(idx, rho)
        return forcing(c0, cos=cos, sin=sin, relations=rels, structure=structure)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def experiment(self) -> dict:
        return self.raw["experiment"]

    @property
    def integrator(self) -> dict:
        return self.raw["integrator"]

    @property
    def dioph(self) -> dict:
        return self.raw["dioph"]

    def with_overrides(self, **kv) -> "ExperimentConfig":
        data = copy.deepcopy(self.raw)
        for key, val in kv.items():
            if val is None:
                continue
            if key == "tol":
                data["integrator"]["tol"] = val
            elif key in ("seed", "out"):
                data[key] = val
            else:
                data["experiment"][key] = val
        return ExperimentConfig.from_dict(data)


@dataclass
class Check:
    """One certified statement of a report."""

    clause: str
    name: str
    module: str
    tolerance: str
    value: float
    passed: bool

    def __post_init__(self):
        self.value = float(self.value)
        self.passed = bool(self.passed)

    def row(self):
        return [self.clause, self.name, self.module, self.tolerance, self.value, "pass" if self.passed else "FAIL"]


# ---------------------------------------------------------------------------
# boundedness
# ---------------------------------------------------------------------------


@dataclass
class OrbitSummary:
    index: int
    x0: float
    y0: float
    max_amplitude: float
    slope: float
    status: str
    checkpoint_sup: np.ndarray


@dataclass
class BoundednessResult:
    label: str
    twist_min: float
    checkpoints: np.ndarray
    orbits: list
    seed: int

    @property
    def max_slope(self) -> float:
        s = [o.slope for o in self.orbits if o.status == "ok"]
        return max(s) if s else float("nan")

    def summary_rows(self):
        return [
            [o.index, o.x0, o.y0, o.max_amplitude, o.slope, o.status, self.label, self.seed]
            for o in self.orbits
        ]

    def series_rows(self):
        rows = []
        for o in self.orbits:
            for t, s in zip(self.checkpoints, o.checkpoint_sup):
                rows.append([o.index, float(t), float(s)])
        return rows


def _growth_slope(times, sups):
    ok = np.isfinite(sups) & (sups > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(times[ok]), np.log(sups[ok]), 1)[0])


def _orbit_job(job) -> OrbitSummary:
    i, x0, t_end, f, p, tol, stride, checkpoints = job
    try:
        tr = integrate_cartesian(State(x0, 0.0, 0.0), t_end, f, p, tol=tol, stride=stride)
    except Exception as exc:  # recorded, the ensemble continues
        return OrbitSummary(i, x0, 0.0, float("nan"), float("nan"), f"error: {exc}", np.full(len(checkpoints), np.nan))
    rs = tr.running_sup()
    idx = np.clip(np.searchsorted(tr.t, checkpoints, side="right") - 1, 0, len(rs) - 1)
    sups = rs[idx]
    return OrbitSummary(i, x0, 0.0, float(rs[-1]), _growth_slope(checkpoints, sups), "ok", sups)


def run_boundedness(config: ExperimentConfig, n_checkpoints: int = 9, workers: int | None = None) -> BoundednessResult:
    """Integrate the ensemble and record running sup(|x| + |y|) at log-spaced checkpoints.

    The twist predicate is evaluated first; if it fails the run is labelled
    "hypothesis-unmet" and still executed.  Integrator failures are recorded
    per orbit.  Orbits run in a process pool of ``workers`` (default: one per
    CPU); results are merged in ensemble order, so reruns are identical.
    """
    p, f = config.params, config.forcing()
    e = config.experiment
    tw = twist_condition(f, p, grid_n=int(e["grid_n"]), t_span=float(e["t_span"]))
    label = "ok" if tw.passed else "hypothesis-unmet"
    rng = np.random.default_rng(config.seed)
    lo, hi = map(float, e["x0_range"])
    t_end = float(e["t_end"])
    c_lo, c_hi = map(float, e["checkpoint_range"])
    c_hi = min(c_hi, t_end)
    checkpoints = np.geomspace(c_lo, c_hi, n_checkpoints)
    tol = float(config.integrator["tol"])
    stride = float(config.integrator["stride"])
    x0s = rng.uniform(lo, hi, int(e["n_orbits"]))
    jobs = [(i, float(x0), t_end, f, p, tol, stride, checkpoints) for i, x0 in enumerate(x0s)]
    if workers is None:
        workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            orbits = list(pool.map(_orbit_job, jobs))
    else:
        orbits = [_orbit_job(job) for job in jobs]
    return BoundednessResult(label, tw.min_abs_L, checkpoints, orbits, config.seed)


# ---------------------------------------------------------------------------
# rotation numbers and invariant curves
# ---------------------------------------------------------------------------


@dataclass
class RotationEstimate:
    value: float
    error: float
    n: int


def rotation_number(times, min_iterates: int = 1000) -> RotationEstimate:
    """(t_N - t_0)/N with Richardson extrapolation 2 rho_N - rho_{N/2}."""
    t = np.asarray(times, dtype=float)
    n = t.size - 1
    if n < min_iterates:
        raise DomainError(f"need at least {min_iterates} iterates, got {n}")
    rho_n = (t[n] - t[0]) / n
    h = n // 2
    rho_h = (t[h] - t[0]) / h
    return RotationEstimate(2 * rho_n - rho_h, abs(rho_n - rho_h), n)


def section_orbit(f: APSeries, p: OscParams, delta: float, t0: float, v0: float, n_iter: int, tol: float = 1e-12):
    """Iterate the scaled section map; raises EscapeError if v leaves [1, 2]."""
    ts, vs = [float(t0)], [float(v0)]
    t, v = float(t0), float(v0)
    for j in range(n_iter):
        t, v = scaled_map(t, v, delta, f, p, tol)
        if not 1 <= v <= 2:
            raise EscapeError(f"orbit left v in [1, 2] at iterate {j + 1} (v = {v})", j + 1)
        ts.append(t)
        vs.append(v)
    return np.array(ts), np.array(vs)


@dataclass
class CurveFit:
    """Fitted curve v = phi(t) through a section orbit."""

    phi: APSeries
    residual: float
    rotation: float
    alpha: float
    orbit_t: np.ndarray = field(repr=False)
    orbit_v: np.ndarray = field(repr=False)
    success: bool = False
    frequencies: tuple = ()
    uses_return_frequency: bool = False

    def __call__(self, t):
        return self.phi(t)


def _fit_frequencies(f: APSeries, order: int):
    """Positive representatives <k, omega> with 0 < |k| <= order on the forcing structure."""
    out = []
    active = set(f.active_indices)
    for k in enumerate_indices(f.structure, order):
        if k.is_positive() and k.support <= active:
            out.append(k)
    return out


def _design(ts, lam):
    cols = [np.ones_like(ts)]
    for w in lam:
        cols += [np.cos(w * ts), np.sin(w * ts)]
    return np.column_stack(cols)


def _lstsq(A, v):
    return np.linalg.lstsq(A, v, rcond=1e-12)[0]


def _holdout_error(ts, vs, lam):
    """Fit on even samples, return the max error on odd samples."""
    coef = _lstsq(_design(ts[::2], lam), vs[::2])
    return float(np.max(np.abs(_design(ts[1::2], lam) @ coef - vs[1::2])))


def find_invariant_curve(
    f: APSeries,
    p: OscParams,
    delta: float,
    t0: float = 0.0,
    v0: float = 1.5,
    n_iter: int = 500,
    fit_order: int = 4,
    tol: float = 1e-12,
    fit_tol: float = 1e-5,
    return_frequency=False,
) -> CurveFit:
    """Fit v = phi(t) to an orbit of the scaled section map by least squares.

    The basis holds the forcing combinations <k, omega> with |k| <= fit_order
    and, optionally, the section-return frequency 2 pi / rho with rho the
    orbit's rotation number.  The return column is off by default: it lowers
    the in-sample residual by fitting integrator noise and then spoils the
    invariance re-test.  ``"auto"`` keeps it only if it lowers the error on
    held-out orbit points.  Success means
    residual <= fit_tol and the orbit staying in v in [1, 2].
    """
    ts, vs = section_orbit(f, p, delta, t0, v0, n_iter, tol)
    rot = rotation_number(ts, min_iterates=min(1000, n_iter))
    ks = _fit_frequencies(f, fit_order)
    omega = dict(f.basis.omega)
    lam = [sum(v * omega[i] for i, v in k.entries) for k in ks]
    nu = 2 * math.pi / rot.value
    if return_frequency == "auto":
        use_return = _holdout_error(ts, vs, lam + [nu]) < _holdout_error(ts, vs, lam)
    else:
        use_return = bool(return_frequency)
    structure = f.structure
    if use_return:
        extra = max(omega) + 1
        omega[extra] = nu
        structure = SpatialStructure(list(structure.sets) + [frozenset({extra})], structure.rho)
        ks = ks + [MultiIndex.unit(extra)]
        lam = lam + [nu]
    basis = FrequencyBasis(omega)
    A = _design(ts, lam)
    coef = _lstsq(A, vs)
    terms = {MultiIndex.zero(): coef[0]}
    for j, k in enumerate(ks):
        a, b = coef[1 + 2 * j], coef[2 + 2 * j]
        terms[k] = 0.5 * (a - 1j * b)
        terms[-k] = 0.5 * (a + 1j * b)
    phi = APSeries(basis, structure, terms)
    residual = float(np.max(np.abs(A @ coef - vs)))
    alpha = (rot.value - p.period) / delta
    return CurveFit(phi, residual, rot.value, alpha, ts, vs, residual <= fit_tol, tuple(lam), use_return)


def curve_invariance(fit: CurveFit, f: APSeries, p: OscParams, delta: float, n: int = 50, seed: int = 0, tol: float = 1e-12) -> float:
    """max |v1 - phi(t1)| over n fresh points (t, phi(t)) mapped once."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(fit.orbit_t.min(), fit.orbit_t.max(), n)
    err = 0.0
    for tj in t:
        t1, v1 = scaled_map(float(tj), float(fit(tj)), delta, f, p, tol)
        err = max(err, abs(v1 - float(fit(t1))))
    return err


def curve_rotation_admissible(fit: CurveFit, f: APSeries, gamma: float, K: int, delta_fn=None) -> bool:
    """Check the curve's rotation beta + delta alpha against the nonresonance bound."""
    delta_fn = delta_fn or ApproximationFunction()
    return rotation_admissible(fit.alpha, fit.rotation, f.basis, f.structure, gamma, delta_fn, K)


# ---------------------------------------------------------------------------
# report bundle
# ---------------------------------------------------------------------------


def _versions():
    import scipy

    return {
        "aposc": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def emit_report(out_dir, config: ExperimentConfig | None = None, checks=(), tables=None) -> list:
    """Write config echo, versions, the check table and CSV tables.

    ``tables`` maps a file stem to (header, rows).  Returns the written paths
    in a fixed order.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = []
    cfg = config.raw if config is not None else {}
    seed = cfg.get("seed", "")
    p = out / "config.json"
    p.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    paths.append(p)
    p = out / "versions.txt"
    p.write_text("".join(f"{k}={v}\n" for k, v in _versions().items()))
    paths.append(p)
    header = ["clause", "check", "module", "tolerance", "value", "status"]
    p = out / "report.txt"
    lines = [f"# seed={seed}", "\t".join(header)]
    for c in checks:
        lines.append("\t".join(repr(v) if isinstance(v, float) else str(v) for v in c.row()))
    p.write_text("\n".join(lines) + "\n")
    paths.append(p)
    paths.append(write_csv(out / "checks.csv", header + ["seed"], [c.row() + [seed] for c in checks]))
    for stem, (hdr, rows) in sorted((tables or {}).items()):
        paths.append(write_csv(out / f"{stem}.csv", hdr, rows))
    return paths
