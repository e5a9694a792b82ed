"""Pade poles of a Lindstedt probe and the resonances of the conformal factor.

The series u(0.33, eps) is continued by two diagonal Pade approximants; the
poles they share are compared with the points where b(eps) = 1 - eps^3 equals
exp(2 pi i l omega), i.e. where a divisor of the Newton operator D_b vanishes.
Takes about half a minute.

    python demos/pade_resonances.py
"""

import gmpy2

from dissipative_tori import lindstedt as L
from dissipative_tori import pade as pd
from dissipative_tori import xfourier as xf

DIGITS, ORDER = 200, 200

params = L.MapParams.standard(DIGITS)
series = L.compute_series(params, ORDER)
probe = pd.extract_scalar_series(series, "probe_theta", "0.33", K=ORDER)
a1, a2 = pd.build_pade(probe, 80, 80), pd.build_pade(probe, 100, 100)
poles = pd.stable_poles(a1, a2).stable()
print(f"{len(poles)} stable poles of [80/80] and [100/100]")


def resonances(ell):
    with xf.working_precision(DIGITS):
        z = 1 - gmpy2.exp(2j * gmpy2.const_pi() * ell * params.omega.omega)
        r, ang = gmpy2.root(abs(z), 3), gmpy2.phase(z)
        return [complex(r * gmpy2.exp(1j * (ang + 2 * gmpy2.const_pi() * k) / 3)) for k in range(3)]


targets = {}
for ell in (34, 55, 89, 144):
    for sign in (1, -1):
        for z in resonances(sign * ell):
            targets[z] = sign * ell

print(" pole                          |pole|    nearest resonance  distance")
for p in poles[:12]:
    z = complex(p.location)
    best = min(targets, key=lambda t: abs(t - z))
    print(f" {z.real:+.10f}{z.imag:+.10f}i  {abs(z):.5f}   l = {targets[best]:+5d}        {abs(best - z):.1e}")
