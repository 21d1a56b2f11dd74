"""Section map of the asymmetric oscillator and its first-order twist.

For large energy the return map to the section x = 0, y > 0 is close to a
rigid time shift by the period P = 2 pi omega_tilde.  The correction is of
order r**-1/2 and is governed by L(t0): when L keeps one sign the map is a
monotone twist.  Run with ``python demos/section_map_and_twist.py``.
"""

import math

import numpy as np

from aposc.oscillator import OscParams, forcing
from aposc.poincare import expansion_order, lm_values, poincare_map, twist_condition, twist_constant

p = OscParams(1.0, 4.0)
f = forcing(1.0, cos=[(math.sqrt(2), 0.3), (math.sqrt(3), 0.2)])
print(f"omega_tilde = {p.omega_tilde}, period P = {p.period:.12f}")

# unforced, the map is an exact shift
res = poincare_map(0.4, 1e4, forcing(0.0), p)
print(f"f = 0:  t1 - t0 - P = {res.t1 - 0.4 - p.period:.2e}, r1 - r0 = {res.r1 - 1e4:.2e}")

# forced, the time advance beyond P matches k L(t0) / sqrt(r0)
L, _, _ = lm_values(f, p, np.array([0.4]))
for r0 in (1e4, 1e6):
    res = poincare_map(0.4, r0, f, p)
    print(f"r0 = {r0:.0e}:  advance {res.t1 - 0.4 - p.period:.6e}, first order {twist_constant(p) * L[0] / math.sqrt(r0):.6e}")

fit = expansion_order(f, p, [1e3, 1e4, 1e5, 1e6, 1e7])
print(f"remainder slopes: t {fit.slope_t:.3f} (expect -1), sqrt r {fit.slope_sqrt_r:.3f} (expect -1/2)")

tw = twist_condition(f, p)
print(f"twist: min |L| = {tw.min_abs_L:.6f} on {tw.grid_n} points, passed = {tw.passed}")
bad = twist_condition(forcing(0.0, cos=[(math.sqrt(2), 1.0)]), p)
print(f"zero-mean forcing: passed = {bad.passed}, sign change found = {bad.sign_change}")
