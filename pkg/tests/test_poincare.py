import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aposc.errors import DomainError
from aposc.oscillator import OscParams, forcing, r_star
from aposc.poincare import (
    base_transform,
    delta_max,
    expansion_order,
    expected_mean_phi,
    jacobian_check,
    lm_values,
    mean_values,
    poincare_map,
    scaled_map,
    twist_coefficients,
    twist_condition,
    twist_constant,
)

P = OscParams(1.0, 4.0)
F0 = forcing(0.0)
F1 = forcing(1.0)
FQ = forcing(1.0, cos=[(math.sqrt(2), 0.3)])
MEAN_PHI = 0.75 * math.sqrt(8 / 3) * 0.75  # omega_tilde * rho * sqrt(a) * (1/a - 1/b)


def test_unforced_map_exact():
    res = poincare_map(1.1, 40.0, F0, P)
    assert res.t1 == pytest.approx(1.1 + 2 * math.pi * P.omega_tilde, abs=1e-14)
    assert res.r1 == 40.0


def test_constant_forcing_conserves_r():
    res = poincare_map(0.5, 1e4, F1, P)
    assert abs(res.r1 - 1e4) <= 1e-9 * 1e4
    assert res.r_min >= r_star(P, F1)


def test_first_order_time_shift():
    r0, t0 = 1e6, 0.4
    res = poincare_map(t0, r0, FQ, P)
    L, _, _ = lm_values(FQ, P, np.array([t0]))
    pred = twist_constant(P) * L[0] / math.sqrt(r0)
    assert 0.5 * pred <= res.t1 - t0 - P.period <= 2 * pred


def test_map_requires_large_r():
    with pytest.raises(DomainError):
        poincare_map(0.0, 1.0, F1, P)


def test_constant_forcing_coefficients():
    c = twist_coefficients(F1, P, grid_n=64)
    assert np.max(np.abs(c.L - 2.0)) <= 1e-9
    assert np.max(np.abs(c.M)) <= 1e-12
    assert np.allclose(c.Phi, twist_constant(P) * c.L, rtol=1e-15)
    assert np.allclose(c.Psi, -twist_constant(P) * c.M, rtol=1e-15, atol=1e-300)


def test_mean_values():
    rep = mean_values(twist_coefficients(F1, P))
    assert rep.mean_phi == pytest.approx(MEAN_PHI, abs=1e-8)
    assert rep.mean_phi == pytest.approx(0.9185586535436917, abs=1e-12)
    assert abs(rep.mean_psi) <= 1e-8
    rep = mean_values(twist_coefficients(forcing(0.0, cos=[(math.sqrt(2), 1.0)]), P))
    assert abs(rep.mean_phi) <= 1e-8 and abs(rep.mean_psi) <= 1e-8
    assert expected_mean_phi(FQ, P) == pytest.approx(MEAN_PHI)


def test_modal_transform_against_quadrature():
    # the coefficient of L for one mode is the transform of C over a period
    from scipy.integrate import quad

    from aposc.oscillator import base_C

    lam = math.sqrt(2)
    re = quad(lambda s: math.cos(lam * s) * base_C(s, P), 0, P.period, points=[P.t_a, P.period - P.t_a], epsabs=1e-13)[0]
    im = quad(lambda s: math.sin(lam * s) * base_C(s, P), 0, P.period, points=[P.t_a, P.period - P.t_a], epsabs=1e-13)[0]
    assert complex(np.asarray(base_transform(lam, P, "C")).item()) == pytest.approx(complex(re, im), abs=1e-12)


def test_off_grid_interpolation():
    c = twist_coefficients(FQ, P)
    t = np.random.default_rng(0).uniform(0, 2000, 10)
    L, M, _ = lm_values(FQ, P, t)
    assert np.max(np.abs(c.interpolate("L", t) - L)) <= 1e-8
    assert np.max(np.abs(c.interpolate("M", t) - M)) <= 1e-8


@settings(max_examples=20, deadline=None)
@given(st.floats(-2.0, 2.0))
def test_constant_shift_of_L(c):
    t = np.linspace(0, 50, 17)
    L0, M0, _ = lm_values(FQ, P, t)
    shifted = forcing(1.0 + c, cos=[(math.sqrt(2), 0.3)])
    L1, M1, _ = lm_values(shifted, P, t)
    assert np.max(np.abs(L1 - L0 - 2.0 * c)) <= 1e-10
    assert np.max(np.abs(M1 - M0)) <= 1e-10


def test_twist_condition_scenario():
    f = forcing(1.0, cos=[(math.sqrt(2), 0.3), (math.sqrt(3), 0.2)])
    rep = twist_condition(f, P)
    assert rep.passed
    assert rep.min_abs_L == pytest.approx(0.7185813, abs=1e-6)


def test_twist_condition_fails_without_mean():
    rep = twist_condition(forcing(0.0, cos=[(math.sqrt(2), 1.0)]), P)
    assert not rep.passed and rep.sign_change
    # a small constant does not rescue an oscillation larger than 2 f0
    assert not twist_condition(forcing(0.1, cos=[(math.sqrt(2), 1.0)]), P).passed


def test_scaled_map_basics():
    assert delta_max(P, F0) == math.inf
    t1, v1 = scaled_map(0.1, 1.3, 1e-3, F0, P)
    assert v1 == 1.3
    with pytest.raises(DomainError):
        scaled_map(0.0, 1.5, 1.0, FQ, P)
    with pytest.raises(DomainError):
        scaled_map(0.0, 2.5, 1e-3, FQ, P)


def test_scaled_map_second_order_remainder():
    t0 = 0.4
    L, M, _ = lm_values(FQ, P, np.array([t0]))
    k = twist_constant(P)
    C = []
    for d in (4e-3, 2e-3, 1e-3, 5e-4):
        t1, v1 = scaled_map(t0, 1.0, d, FQ, P)
        C.append((t1 - t0 - P.period - d * k * L[0]) / d**2)
    # the remainder is O(delta^2): the scaled values settle to a constant
    assert max(C) - min(C) <= 0.01 * abs(C[-1])


def test_expansion_orders():
    fit = expansion_order(FQ, P, [1e3, 1e4, 1e5, 1e6, 1e7])
    assert abs(fit.slope_t + 1.0) <= 0.15
    assert abs(fit.slope_sqrt_r + 0.5) <= 0.15


def test_expansion_unforced_exact():
    fit = expansion_order(F0, P, [1e3, 1e4, 1e5, 1e6])
    assert fit.exact_t and fit.exact_sqrt_r


def test_expansion_ladder_too_short():
    with pytest.raises(DomainError):
        expansion_order(FQ, P, [1e3, 1e4])


def test_section_map_preserves_weighted_area():
    rng = np.random.default_rng(3)
    for t0, lr in zip(rng.uniform(0, 100, 20), rng.uniform(3, 5, 20)):
        det, ratio = jacobian_check(float(t0), 10.0**lr, FQ, P)
        assert abs(det - ratio) <= 1e-6
