"""Continuation around the leading pole and back: the monodromy is trivial.

Seeds Newton from the Lindstedt series near the origin, walks out along a
ray to a circle around the pole nearest the origin in the upper half plane
(the l = -89 resonance) and continues once around it.  About half a minute.

    python demos/monodromy_loop.py
"""

import gmpy2

from dissipative_tori import lindstedt as L
from dissipative_tori import newton as nw
from dissipative_tori import xfourier as xf

DIGITS = 60

params = L.MapParams.standard(DIGITS)
series = L.compute_series(params, 40)

with xf.working_precision(DIGITS):
    z = 1 - gmpy2.exp(-2j * gmpy2.const_pi() * 89 * params.omega.omega)
    pole = complex(gmpy2.root(abs(z), 3) * gmpy2.exp(1j * gmpy2.phase(z) / 3))
print(f"pole {pole:.8f}")

loop = nw.LoopPath(pole, 0.0275, steps=64, start_angle=gmpy2.phase(pole) + gmpy2.const_pi())
seed = nw.reach(params, series, loop.point(0, DIGITS), "1e-40")
res = nw.monodromy_loop(params, loop, seed, "1e-40")
print(f"monodromy: |u_end - u_start| / |u_start| = {float(res.defect_u):.2e}, "
      f"|c_end - c_start| = {float(res.defect_c):.2e}")
print(" instance  eps                        c(eps)")
for j, s in enumerate(res.instances, 1):
    e, c = complex(s.eps), complex(s.c)
    print(f" {j}         {e.real:.7f}{e.imag:+.7f}i    {c.real:+.8f}{c.imag:+.8f}i")
