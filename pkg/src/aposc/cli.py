"""Command line front end.

Every subcommand reads the same JSON configuration (see ``aposc.experiments.
DEFAULTS`` for the schema), writes its tables into ``--out`` and prints a
short summary.  ``report`` runs the whole pipeline and emits the check table.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .dioph import ApproximationFunction, detect_resonances, nonres_margin, scan_rotation_interval
from .errors import ConfigError, EscapeError, HypothesisError, ResonanceError
from .experiments import (
    Check,
    ExperimentConfig,
    curve_invariance,
    curve_rotation_admissible,
    emit_report,
    find_invariant_curve,
    parse_real,
    run_boundedness,
)
from .io import write_csv, write_records
from .normalform import (
    build_resonant_frame,
    conjugate_U,
    measure_drift,
    oscillator_model,
    oscillator_resonant_integral,
    solve_homological,
    truncate_series,
)
from .oscillator import State, forcing, integrate_cartesian
from .poincare import delta_max, poincare_map, twist_coefficients, twist_condition

__all__ = ["main", "build_parser", "run_pipeline"]


# ---------------------------------------------------------------------------
# individual stages; each returns (checks, tables)
# ---------------------------------------------------------------------------


def _twist(cfg):
    p, f = cfg.params, cfg.forcing()
    e = cfg.experiment
    tw = twist_condition(f, p, grid_n=int(e["grid_n"]), t_span=float(e["t_span"]))
    coeffs = twist_coefficients(f, p, tw.grid_n, float(e["t_span"]))
    rows = [[float(t), float(L), float(M), float(a), float(b)] for t, L, M, a, b in zip(coeffs.t0, coeffs.L, coeffs.M, coeffs.Phi, coeffs.Psi)]
    check = Check("twist condition", "min |L(t0)| > 1e-6", "poincare", "1e-6", tw.min_abs_L, tw.passed)
    return [check], {"twist": (["t0", "L", "M", "Phi", "Psi"], rows)}


def _dioph(cfg):
    f = cfg.forcing()
    d = cfg.dioph
    lo, hi = map(float, d["alpha"])
    K = int(d["K"])
    delta = ApproximationFunction()
    rows = []
    fractions = []
    for gamma in sorted(map(float, d["gamma"]), reverse=True):
        scan = scan_rotation_interval(lo, hi, int(d["grid_n"]), f.basis, f.structure, gamma, delta, K)
        fractions.append(scan.fraction)
        rows.append([gamma, K, scan.fraction])
    margin = nonres_margin(f.basis, f.structure, delta, K) if len(f.basis.omega) else None
    monotone = all(a <= b for a, b in zip(fractions, fractions[1:]))
    checks = [Check("rotation admissibility", "admissible fraction nondecreasing as gamma shrinks", "dioph", "exact", float(fractions[-1]) if fractions else math.nan, monotone)]
    if margin is not None:
        checks.append(Check("nonresonance", f"margin over |k| <= {K} positive", "dioph", "exact", float(margin), margin.margin > 0))
    return checks, {"dioph_scan": (["gamma", "K", "fraction"], rows)}


def _normalform(cfg, out=None):
    p, f = cfg.params, cfg.forcing()
    e = cfg.experiment
    delta = float(e["delta"])
    tol = float(cfg.integrator["theta_tol"])
    model = oscillator_model(f, p, delta, tol=tol)
    res = detect_resonances(f.basis, f.structure, model.beta, int(cfg.dioph["K"]), float(cfg.dioph["tol"]))
    if out is not None:
        write_records(Path(out) / "resonances.txt", res.records())
    head_l = truncate_series(model.l, 0.1, 0.1, math.inf).head
    head_m = truncate_series(model.m, 0.1, 0.1, math.inf).head
    try:
        sol = solve_homological(head_l, model.beta, h2=head_m)
    except ResonanceError as exc:
        return [Check("homological equation", f"resonant mode {exc.k}", "normalform", "1e-8", math.nan, False)], {}
    cm = conjugate_U(model, sol)
    xs = np.linspace(0.0, 20.0, 15)
    ys = [1.1, 1.5, 1.9]
    before = measure_drift(model, model, xs, ys)
    after = measure_drift(cm, model, xs, ys)
    ratio = before.total / after.total if after.total > 0 else math.inf
    checks = [
        Check("homological equation", "relative coefficient residual", "normalform", "1e-13", sol.residual, sol.residual <= 1e-13),
        Check("homological equation", "drift reduction by one conjugation", "normalform", ">= 10", ratio, ratio >= 10),
    ]
    rows = [["before", before.drift_x, before.drift_y], ["after", after.drift_x, after.drift_y]]
    return checks, {"drift": (["stage", "drift_x", "drift_y"], rows)}


def _resonant(cfg):
    p = cfg.params
    res_cfg = cfg.experiment["resonant"]
    lam, exact = parse_real(res_cfg["freq"])
    amp, _ = parse_real(res_cfg["amp"])
    c0, _ = parse_real(cfg.raw["forcing"].get("constant", 0.0))
    rel = [(lam, exact, Fraction(0))] if exact is not None else []
    f_S = forcing(c0, cos=[(lam, amp)], relations=rel)
    ri = oscillator_resonant_integral(f_S, p)
    frame = build_resonant_frame(
        ri.lbar, ri.mbar, ri.I, p.period, tuple(map(float, res_cfg["bounds"])),
        dI_dtheta=ri.dI_dt, dI_dr=ri.dI_dv, dlbar_dr=ri.dlbar_dv,
    )
    pde_v, pde_ok = frame.checks["PDE"]
    shift_v, shift_ok = frame.checks["tau shift"]
    checks = [
        Check("first-integral PDE", f"residual with exponent sign {ri.sigma:+d}", "normalform", "1e-8", pde_v, pde_ok),
        Check("shift identity", "tau(theta + beta) - tau(theta) - beta", "normalform", "1e-8", shift_v, shift_ok),
    ]
    rows = [[name, float(v), bool(ok)] for name, (v, ok) in frame.checks.items()]
    table = [[float(h), float(T), float(W)] for h, T, W in zip(frame.h_grid, frame.T_table, frame.Omega_table)]
    return checks, {"resonant_checks": (["check", "value", "passed"], rows), "resonant_frame": (["h", "T", "Omega"], table)}


def _curve(cfg):
    p, f = cfg.params, cfg.forcing()
    e = cfg.experiment
    delta = float(e["delta"])
    tol = float(cfg.integrator["theta_tol"])
    try:
        fit = find_invariant_curve(
            f, p, delta, float(e["t0"]), float(e["v0"]), int(e["n_iter"]), int(e["fit_order"]), tol,
            float(e["fit_tol"]), e["return_frequency"],
        )
    except EscapeError as exc:
        return [Check("invariant curve", f"orbit escaped at iterate {exc.iterate}", "experiments", "-", math.nan, False)], {}
    inv = curve_invariance(fit, f, p, delta, seed=cfg.seed, tol=tol)
    gamma = min(map(float, cfg.dioph["gamma"]))
    adm = curve_rotation_admissible(fit, f, gamma, int(cfg.dioph["K"]))
    checks = [
        Check("invariant curve", "fit residual", "experiments", repr(float(e["fit_tol"])), fit.residual, fit.success),
        Check("invariant curve", "invariance re-test within 2x residual", "experiments", "2x residual", inv, inv <= 2 * fit.residual),
        Check("rotation admissibility", f"curve rotation, gamma={gamma:g}", "dioph", "exact", fit.rotation, adm),
    ]
    coef = [[str(k) if k else "0", complex(c).real, complex(c).imag] for k, c in fit.phi.terms.items()]
    orbit = [[j, float(t), float(v)] for j, (t, v) in enumerate(zip(fit.orbit_t, fit.orbit_v))]
    return checks, {"curve_coefficients": (["k", "re", "im"], coef), "curve_orbit": (["j", "t", "v"], orbit)}


def _boundedness(cfg):
    res = run_boundedness(cfg)
    slope = res.max_slope
    checks = [Check("boundedness", "max running-sup log-log slope", "experiments", "0.02", slope, res.label == "ok" and slope <= 0.02)]
    tables = {
        "boundedness_summary": (["orbit", "x0", "y0", "max_amplitude", "slope", "status", "label", "seed"], res.summary_rows()),
        "boundedness_series": (["orbit", "t", "running_sup"], res.series_rows()),
    }
    return checks, tables


def run_pipeline(cfg: ExperimentConfig, out, boundedness: bool = True, log=print):
    """Run every stage on ``cfg`` and write the report bundle into ``out``."""
    stages = [("twist", _twist), ("dioph", _dioph), ("normalform", lambda c: _normalform(c, out)), ("resonant", _resonant), ("curve", _curve)]
    if boundedness:
        stages.append(("boundedness", _boundedness))
    checks, tables = [], {}
    for name, stage in stages:
        t = time.perf_counter()
        try:
            c, tb = stage(cfg)
        except HypothesisError as exc:
            c, tb = [Check(exc.clause, str(exc), name, "-", math.nan, False)], {}
        checks += c
        tables.update(tb)
        log(f"{name:12s} {time.perf_counter() - t:7.1f} s  " + "  ".join(f"{x.name}: {'pass' if x.passed else 'FAIL'}" for x in c))
    emit_report(out, cfg, checks, tables)
    return checks


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _emit_stage(args, cfg, result):
    checks, tables = result
    emit_report(args.out, cfg, checks, tables)
    for c in checks:
        print(f"{c.clause}: {c.name} = {c.value!r} [{'pass' if c.passed else 'FAIL'}]")
    return 0 if all(c.passed for c in checks) else 1


def cmd_simulate(args, cfg):
    p, f = cfg.params, cfg.forcing()
    t_end = args.t_end if args.t_end is not None else float(cfg.experiment["t_end"])
    tr = integrate_cartesian(State(args.x0, args.y0, 0.0), t_end, f, p, tol=float(cfg.integrator["tol"]), stride=float(cfg.integrator["stride"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tr.to_csv(out / "trajectory.csv")
    print(f"t_end={tr.t[-1]!r} samples={len(tr.t)} crossings={len(tr.crossings)} sup(|x|+|y|)={float(tr.running_sup()[-1])!r}")
    return 0


def cmd_poincare(args, cfg):
    p, f = cfg.params, cfg.forcing()
    tol = float(cfg.integrator["theta_tol"])
    t, r = args.t0, args.r0
    rows = [[0, t, r]]
    for j in range(1, args.iterations + 1):
        res = poincare_map(t, r, f, p, tol)
        t, r = res.t1, res.r1
        rows.append([j, t, r])
    write_csv(Path(args.out) / "poincare.csv", ["j", "t", "r"], rows)
    print(f"after {args.iterations} iterates: t={t!r} r={r!r}")
    return 0


def cmd_twist(args, cfg):
    return _emit_stage(args, cfg, _twist(cfg))


def cmd_dioph(args, cfg):
    return _emit_stage(args, cfg, _dioph(cfg))


def cmd_normalform(args, cfg):
    return _emit_stage(args, cfg, _normalform(cfg, args.out))


def cmd_curve(args, cfg):
    p, f = cfg.params, cfg.forcing()
    print(f"delta={float(cfg.experiment['delta'])!r} delta_max={delta_max(p, f)!r}")
    return _emit_stage(args, cfg, _curve(cfg))


def cmd_boundedness(args, cfg):
    return _emit_stage(args, cfg, _boundedness(cfg))


def cmd_report(args, cfg):
    checks = run_pipeline(cfg, args.out, boundedness=not args.skip_boundedness)
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed; report in {args.out}")
    return 0 if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (defaults are used for missing keys)")
    common.add_argument("--out", help="output directory (default: config 'out')")
    common.add_argument("--tol", type=float, help="override the Cartesian integrator tolerance")
    common.add_argument("--seed", type=int, help="override the random seed")

    parser = argparse.ArgumentParser(prog="aposc", description="Asymmetric oscillator with almost periodic forcing: section maps, twist checks and invariant curves.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="integrate one orbit in Cartesian variables")
    s.add_argument("--x0", type=float, default=20.0)
    s.add_argument("--y0", type=float, default=0.0)
    s.add_argument("--t-end", type=float, default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("poincare", parents=[common], help="iterate the section map from (t0, r0)")
    s.add_argument("--t0", type=float, default=0.0)
    s.add_argument("--r0", type=float, default=1e4)
    s.add_argument("--iterations", type=int, default=10)
    s.set_defaults(func=cmd_poincare)

    s = sub.add_parser("twist-check", parents=[common], help="tabulate L, M and test the twist condition")
    s.set_defaults(func=cmd_twist)

    s = sub.add_parser("dioph-scan", parents=[common], help="admissible rotation fractions over the gamma ladder")
    s.set_defaults(func=cmd_dioph)

    s = sub.add_parser("normalform", parents=[common], help="one conjugation step on the scaled map")
    s.set_defaults(func=cmd_normalform)

    s = sub.add_parser("curve", parents=[common], help="fit an invariant curve through a section orbit")
    s.set_defaults(func=cmd_curve)

    s = sub.add_parser("boundedness", parents=[common], help="integrate the orbit ensemble and record running sups")
    s.set_defaults(func=cmd_boundedness)

    s = sub.add_parser("report", parents=[common], help="run the full pipeline and write the report bundle")
    s.add_argument("--skip-boundedness", action="store_true", help="leave out the long ensemble run")
    s.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
        cfg = cfg.with_overrides(tol=args.tol, seed=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"aposc: configuration error: {exc}", file=sys.stderr)
        return 2
    if args.out is None:
        args.out = cfg.raw["out"]
    else:
        cfg = cfg.with_overrides(out=args.out)
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
