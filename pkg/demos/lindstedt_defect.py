"""Lindstedt series of the dissipative standard map and its defect order.

Builds the series to order 20 at 100 digits, prints the first counter-terms
and shows that truncating at order N leaves an invariance defect of order
eps^(N+1).

    python demos/lindstedt_defect.py
"""

import math

from dissipative_tori import lindstedt as L
from dissipative_tori import xfourier as xf

DIGITS = 100

params = L.MapParams.standard(DIGITS)
series = L.compute_series(params, 20)

for k in range(6):
    print(f"c_{k} = {xf.decimal_string(series.c[k].real, 25)}")
print("omega =", xf.decimal_string(params.omega.omega, 25))

eps_values = [1e-3 * 10 ** (j / 7) for j in range(8)]
for N in (5, 10, 20):
    sub = L.LindstedtSeries(N, series.u[:N + 1], series.c[:N + 1], params, DIGITS)
    logs = []
    for e in eps_values:
        with xf.working_precision(DIGITS):
            eps = xf.xreal(repr(e), DIGITS)
        u, c = L.evaluate(sub, eps)
        logs.append((math.log(e), math.log(float(L.defect(params, u, c, eps)))))
    (x0, y0), (x1, y1) = logs[0], logs[-1]
    print(f"N={N:2d}: defect {math.exp(y0):.2e} .. {math.exp(y1):.2e}, slope {(y1 - y0) / (x1 - x0):.3f}")
