import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from aposc.errors import ConfigError, DomainError, EscapeError
from aposc.experiments import (
    DEFAULTS,
    Check,
    ExperimentConfig,
    curve_invariance,
    curve_rotation_admissible,
    emit_report,
    find_invariant_curve,
    parse_real,
    rotation_number,
    run_boundedness,
    section_orbit,
)
from aposc.oscillator import OscParams, energy, forcing
from aposc.poincare import lm_values, scaled_map

P = OscParams(1.0, 4.0)
FQ = forcing(1.0, cos=[(math.sqrt(2), 0.3)])
MEAN_PHI = 0.9185586535436917


def _small(**experiment):
    base = {"n_orbits": 3, "t_end": 60.0, "checkpoint_range": [6.0, 60.0]}
    base.update(experiment)
    return base


# -- configuration ----------------------------------------------------------


def test_parse_real():
    assert parse_real(2) == (2.0, None)
    assert parse_real("sqrt(2)")[0] == math.sqrt(2)
    v, q = parse_real("4/3")
    assert v == 4 / 3 and q.numerator == 4 and q.denominator == 3
    for bad in ("abc", True, None):
        with pytest.raises(ConfigError):
            parse_real(bad)


def test_defaults_are_valid_and_seeded():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.seed == DEFAULTS["seed"]
    f = cfg.forcing()
    assert f.constant_term == 1.0
    assert cfg.params.omega_tilde == 0.75


def test_rational_frequency_declares_relation():
    cfg = ExperimentConfig.from_dict({"forcing": {"constant": 1.0, "terms": [{"freq": "4/3", "amp": 0.3}]}})
    rel = cfg.forcing().basis.relations
    assert len(rel) == 1 and rel[0].plain == pytest.approx(4 / 3)


@pytest.mark.parametrize(
    "bad",
    [
        {"oscillator": {"a": 1.0, "b": 1.0}},
        {"experiment": {"delta": 2.0}},
        {"experiment": {"v0": 3.0}},
        {"integrator": {"tol": 1e-3}},
        {"structure": {"rho": 1.5}},
        {"forcing": {"terms": [{"freq": -1.0, "amp": 1.0}]}},
        {"unknown_section": {}},
        {"seed": "x"},
    ],
)
def test_invalid_config_rejected(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"experiment": {"delta": 5e-4}, "seed": 7}))
    cfg = ExperimentConfig.load(path)
    assert cfg.experiment["delta"] == 5e-4 and cfg.seed == 7
    cfg2 = cfg.with_overrides(tol=1e-11, seed=9)
    assert cfg2.integrator["tol"] == 1e-11 and cfg2.seed == 9
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)


# -- rotation numbers -------------------------------------------------------


def test_rotation_rigid_shift():
    beta = 0.7390851332151607
    t = 0.3 + beta * np.arange(1001)
    est = rotation_number(t)
    assert est.value == pytest.approx(beta, abs=1e-14)
    assert est.n == 1000


def test_rotation_needs_enough_iterates():
    with pytest.raises(DomainError):
        rotation_number(np.arange(10.0))


def test_rotation_unforced_map():
    t = 0.1 + P.period * np.arange(1001)
    assert rotation_number(t).value == pytest.approx(P.period, abs=1e-12)


def test_rotation_constant_forcing_first_order():
    delta, v0 = 1e-3, 1.5
    ts, _ = section_orbit(forcing(1.0), P, delta, 0.0, v0, 1000)
    est = rotation_number(ts)
    assert abs(est.value - (P.period + delta * MEAN_PHI * v0)) <= 5 * delta**2


# -- invariant curves -------------------------------------------------------


def test_constant_forcing_curve_is_flat():
    fit = find_invariant_curve(forcing(1.0), P, 1e-3, n_iter=100)
    assert fit.residual <= 1e-8
    assert all(abs(c) < 1e-10 for k, c in fit.phi.terms.items() if k)
    assert fit.phi.constant_term.real == pytest.approx(1.5, abs=1e-12)


def test_unforced_curve_residual():
    fit = find_invariant_curve(forcing(0.0), P, 1e-3, n_iter=100)
    assert fit.residual <= 1e-12


def test_forced_curve_fit_and_invariance():
    fit = find_invariant_curve(FQ, P, 1e-3)
    assert fit.success and fit.residual <= 1e-5
    assert not fit.uses_return_frequency
    assert curve_invariance(fit, FQ, P, 1e-3, n=20) <= 2 * fit.residual
    assert curve_rotation_admissible(fit, FQ, 1e-3, 8)


def test_orbit_escape_reports_iterate():
    t = np.linspace(0, 10, 101)
    _, M, _ = lm_values(FQ, P, t)
    t0 = float(t[np.argmax(M)])  # Psi = -k M < 0 here, so v drops below 1
    assert scaled_map(t0, 1.0, 1e-3, FQ, P)[1] < 1.0
    with pytest.raises(EscapeError) as info:
        section_orbit(FQ, P, 1e-3, t0, 1.0, 10)
    assert info.value.iterate == 1


# -- boundedness ------------------------------------------------------------


def test_unforced_ensemble_plateaus():
    cfg = ExperimentConfig.from_dict({"forcing": {"constant": 0.0, "terms": []}, "experiment": _small()})
    res = run_boundedness(cfg, workers=1)
    assert res.label == "hypothesis-unmet"  # L vanishes identically
    for o in res.orbits:
        # after one period the running sup only changes by sampling of the same loop
        after = o.checkpoint_sup[res.checkpoints >= P.period]
        assert np.ptp(after) <= 1e-5 * after[0]
    assert len(res.summary_rows()) == 3


def test_constant_forcing_energy_bound():
    cfg = ExperimentConfig.from_dict({"forcing": {"constant": 1.0, "terms": []}, "experiment": _small()})
    res = run_boundedness(cfg, workers=1)
    f0 = 1.0
    for o in res.orbits:
        E = float(energy(o.x0, o.y0, P, f0))
        V = lambda x: float(energy(x, 0.0, P, f0))
        x_hi = brentq(lambda x: V(x) - E, f0 / P.a, 1e6)
        x_lo = brentq(lambda x: V(x) - E, -1e6, 0.0)
        y_max = math.sqrt(2 * (E - V(f0 / P.a)))
        assert o.max_amplitude <= max(x_hi, -x_lo) + y_max


def test_ensemble_workers_match_serial():
    cfg = ExperimentConfig.from_dict({"experiment": _small(n_orbits=2, t_end=30.0, checkpoint_range=[3.0, 30.0])})
    a = run_boundedness(cfg, workers=1)
    b = run_boundedness(cfg, workers=2)
    assert [o.x0 for o in a.orbits] == [o.x0 for o in b.orbits]
    for oa, ob in zip(a.orbits, b.orbits):
        assert np.array_equal(oa.checkpoint_sup, ob.checkpoint_sup)


# -- report bundle ----------------------------------------------------------


def test_empty_report_is_header_only(tmp_path):
    paths = emit_report(tmp_path)
    names = [p.name for p in paths]
    assert names == ["config.json", "versions.txt", "report.txt", "checks.csv"]
    assert (tmp_path / "checks.csv").read_text().splitlines() == ["clause,check,module,tolerance,value,status,seed"]


def test_report_is_deterministic(tmp_path):
    cfg = ExperimentConfig.from_dict({})
    checks = [Check("twist condition", "min |L|", "poincare", "1e-6", np.float64(0.5), np.True_)]
    tables = {"t": (["a", "b"], [[1, 0.1], [2, 1 / 3]])}
    emit_report(tmp_path / "a", cfg, checks, tables)
    emit_report(tmp_path / "b", cfg, checks, tables)
    for name in ("config.json", "report.txt", "checks.csv", "t.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "0.5\tpass" in (tmp_path / "a" / "report.txt").read_text()
    assert f"seed={cfg.seed}" in (tmp_path / "a" / "report.txt").read_text()


def test_unwritable_report_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(blocker / "sub")
