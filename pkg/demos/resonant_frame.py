"""First integral and frame for a forcing frequency resonant with the period.

When 4/3 * P is a multiple of 2 pi the mode cos(4t/3) cannot be removed by
the homological equation.  The averaged twist coefficients then admit a
first integral I(t, v); its level sets are nested closed curves whose
return time T decreases with the level, and tau gives the conjugate angle.
"""

from fractions import Fraction
import math

from aposc.normalform import build_resonant_frame, oscillator_resonant_integral, solve_homological
from aposc.apfun import APSeries, FrequencyBasis, MultiIndex, RationalRelation, SpatialStructure
from aposc.errors import ResonanceError
from aposc.oscillator import OscParams, forcing

p = OscParams(1.0, 4.0)

b = FrequencyBasis({1: 4 / 3}, relations=[RationalRelation(MultiIndex.unit(1), plain=Fraction(4, 3))])
h = APSeries.trig(b, SpatialStructure.singletons([1]), cos={MultiIndex.unit(1): 1.0})
try:
    solve_homological(h, p.period)
except ResonanceError as exc:
    print(f"homological equation refuses mode k = {exc.k}: {exc}")

fS = forcing(1.0, cos=[(4 / 3, 0.3)], relations=[(4 / 3, Fraction(4, 3), Fraction(0))])
ri = oscillator_resonant_integral(fS, p)
print(f"exponent sign {ri.sigma}, residuals by sign {ri.residuals}")

fr = build_resonant_frame(ri.lbar, ri.mbar, ri.I, p.period, (1.0, 2.5, 6.5, 17.0), dI_dtheta=ri.dI_dt, dI_dr=ri.dI_dv, dlbar_dr=ri.dlbar_dv)
for name, (value, ok) in fr.checks.items():
    print(f"  {name:14s} {value: .3e}  {'pass' if ok else 'FAIL'}")
print(f"PDE residual {fr.pde_residual:.2e}, shift residual {fr.tau_shift_residual:.2e}")
print(f"return time T from {fr.T_table.max():.4f} down to {fr.T_table.min():.4f}")
print(f"tau(1, 5) = {fr.tau(1.0, 5.0):.6f}, beta = {p.period:.6f}")
