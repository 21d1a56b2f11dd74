"""Invariant curve of the scaled section map.

With r = delta**-2 v**-2 the section map becomes a small perturbation of a
rigid rotation in t.  An orbit started at v0 stays on a curve v = phi(t)
whose Fourier support lies on combinations of the forcing frequencies; we
fit it by least squares, then re-test invariance on fresh points.
"""

import math

from aposc.experiments import curve_invariance, curve_rotation_admissible, find_invariant_curve, rotation_number, section_orbit
from aposc.oscillator import OscParams, forcing

p = OscParams(1.0, 4.0)
f = forcing(1.0, cos=[(math.sqrt(2), 0.3), (math.sqrt(3), 0.2)])
delta = 1e-3

ts, vs = section_orbit(f, p, delta, 0.0, 1.5, 1000)
print(f"orbit: v stays in [{vs.min():.6f}, {vs.max():.6f}]")
rot = rotation_number(ts)
print(f"rotation number {rot.value:.12f}, P + delta * mean Phi * v0 = {p.period + delta * 0.9185586535436917 * 1.5:.12f}")

fit = find_invariant_curve(f, p, delta)
print(f"curve fit: {len(fit.phi.terms)} Fourier terms, residual {fit.residual:.2e}, success {fit.success}")
print(f"invariance on fresh points: {curve_invariance(fit, f, p, delta):.2e}")
print(f"rotation admissible for K = 8: {curve_rotation_admissible(fit, f, 1e-3, 8)}")
