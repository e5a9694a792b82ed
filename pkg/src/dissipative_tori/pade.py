"""Pade approximants of scalar eps-series and their stable poles.

A scalar series ``g(eps) = sum g_k eps^k`` is taken from the Lindstedt data
(the conjugacy at a fixed angle, one Fourier mode, or the drift).  The
zeros of the Pade denominators of two different orders that coincide are
taken as the singularities of ``g`` in the eps-plane.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from . import xfourier as xf
from .lindstedt import LindstedtSeries
from .xfourier import working_precision

log = logging.getLogger(__name__)


class SingularSystem(ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class RootNonConvergence(ArithmeticError):
    def __init__(self, message, roots=None, step=None):
        super().__init__(message)
        self.roots = roots
        self.step = step


@dataclass(frozen=True, eq=False)
class ScalarSeries:
    coeffs: tuple
    provenance: str
    digits: int

    @property
    def K(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def from_values(cls, values: Sequence, digits: int, provenance: str = "explicit") -> "ScalarSeries":
        return cls(tuple(xf.xscalar(v, digits) for v in values), provenance, digits)


def extract_scalar_series(series: LindstedtSeries, provenance: str = "probe_theta", theta="0.33",
                          ell: int = 1, K: int | None = None) -> ScalarSeries:
    """``g_k`` = ``u_k(theta)`` (``probe_theta``), ``u_k``'s mode ``ell`` (``fourier_mode``) or ``c_k`` (``drift``)."""
    K = series.N if K is None else K
    if K > series.N:
        raise ValueError(f"series has order {series.N} < {K}")
    d = series.digits
    with working_precision(d):
        if provenance == "probe_theta":
            th = xf.xreal(theta, d)
            g = [xf.evaluate(series.u[k], th) for k in range(K + 1)]
            tag = f"probe_theta({theta})"
        elif provenance == "fourier_mode":
            g = [series.u[k][ell] if abs(ell) <= series.u[k].M else mpc(0) for k in range(K + 1)]
            tag = f"fourier_mode({ell})"
        elif provenance == "drift":
            g = [mpc(series.c[k]) for k in range(K + 1)]
            tag = "drift"
        else:
            raise ValueError(f"unknown probe {provenance!r}")
    return ScalarSeries(tuple(g), tag, d)


@dataclass(frozen=True, eq=False)
class PadeApproximant:
    P: tuple
    Q: tuple
    digits: int
    provenance: str = ""
    condition: float = float("nan")
    work_digits: int = 0

    def __post_init__(self):
        # P and Q may carry guard digits beyond the data precision
        object.__setattr__(self, "work_digits", max(self.work_digits, self.digits))

    @property
    def p(self) -> int:
        return len(self.P) - 1

    @property
    def q(self) -> int:
        return len(self.Q) - 1

    def __call__(self, eps):
        with working_precision(self.work_digits):
            e = xf.xscalar(eps, self.work_digits)
            return horner(self.P, e) / horner(self.Q, e)


def horner(coeffs: Sequence, z):
    acc = mpc(0)
    for a in reversed(coeffs):
        acc = acc * z + a
    return acc


def lu_solve(A: np.ndarray, rhs: np.ndarray, digits: int, pivot_digits: int | None = None):
    """Dense LU with partial pivoting on object arrays.  Returns ``(x, condition estimate)``.

    The condition estimate is ``||A||_1`` times the 1-norm of ``A^{-1}``
    applied to the all-ones vector, scaled, which is cheap but can
    understate badly conditioned Toeplitz systems.  Pivots below
    ``||A|| 10^-(pivot_digits - 5)`` count as singular; ``pivot_digits``
    defaults to ``digits`` and should be the precision of the data.
    """
    n = A.shape[0]
    with working_precision(digits):
        U = A.copy()
        perm = list(range(n))
        L = np.full((n, n), mpc(0), dtype=object)
        norm_A = max(sum(abs(U[i, j]) for i in range(n)) for j in range(n)) if n else mpfr(0)
        floor = norm_A * mpfr(10) ** (-((pivot_digits or digits) - 5))
        for j in range(n):
            piv = max(range(j, n), key=lambda i: abs(U[i, j]))
            if abs(U[piv, j]) <= floor:
                raise SingularSystem(f"pivot {float(abs(U[piv, j])):.3e} at column {j} below floor", math.inf)
            if piv != j:
                U[[j, piv]] = U[[piv, j]]
                L[[j, piv]] = L[[piv, j]]
                perm[j], perm[piv] = perm[piv], perm[j]
            f = U[j + 1:, j] / U[j, j]
            L[j + 1:, j] = f
            U[j + 1:, j:] = U[j + 1:, j:] - np.outer(f, U[j, j:])

        def solve(b):
            y = np.array([b[i] for i in perm], dtype=object)
            for i in range(n):
                y[i] = y[i] - (L[i, :i] * y[:i]).sum() if i else y[i]
            for i in range(n - 1, -1, -1):
                y[i] = (y[i] - ((U[i, i + 1:] * y[i + 1:]).sum() if i < n - 1 else 0)) / U[i, i]
            return y

        x = solve(rhs)
        probe = solve(np.full(n, mpc(1), dtype=object))
        cond = float(norm_A * sum(abs(v) for v in probe) / max(n, 1)) if n else 1.0
    return x, cond


def _solve_pade(g: list, p: int, q: int, work: int, d: int):
    def gk(i):
        return g[i] if i >= 0 else mpc(0)

    with working_precision(work):
        cond = 1.0
        if q:
            A = np.empty((q, q), dtype=object)
            rhs = np.empty(q, dtype=object)
            for r in range(q):
                i = p + 1 + r
                rhs[r] = -gk(i)
                for j in range(1, q + 1):
                    A[r, j - 1] = gk(i - j)
            Qt, cond = lu_solve(A, rhs, work, pivot_digits=d)
            Q = [mpc(1)] + list(Qt)
        else:
            Q = [mpc(1)]
        P = [sum((gk(i - j) * Q[j] for j in range(min(i, q) + 1)), mpc(0)) for i in range(p + 1)]
    return tuple(P), tuple(Q), cond


def build_pade(s: ScalarSeries, p: int, q: int, guard: int | None = None) -> PadeApproximant:
    """``[p/q]`` approximant with ``Q(0) = 1`` from ``g_0..g_{p+q}``.

    The Toeplitz system for large ``q`` is far worse conditioned than the
    cheap estimate suggests.  With ``guard=None`` the solve is repeated with
    growing guard digits (up to ``d`` extra) until re-expansion reproduces
    the input to relative ``10^-(d-15)``; an explicit ``guard`` fixes the
    extra digits instead.
    """
    if p < 0 or q < 0:
        raise ValueError("degrees must be non-negative")
    if s.K < p + q:
        raise ValueError(f"need {p + q + 1} coefficients, have {s.K + 1}")
    d = s.digits
    g = list(s.coeffs)
    extra = guard if guard is not None else 0
    while True:
        P, Q, cond = _solve_pade(g, p, q, d + extra, d)
        a = PadeApproximant(P, Q, d, s.provenance, cond, d + extra)
        if guard is not None or q == 0 or extra >= d:
            return a
        with working_precision(d):
            if reexpansion_error(a, s) < mpfr(10) ** -(d - 15):
                return a
        extra = min(d, max(2 * extra, 16))
        log.debug("[%d/%d]: raising guard digits to %d", p, q, extra)


def reexpansion_error(a: PadeApproximant, s: ScalarSeries):
    """Largest relative deviation of the Maclaurin coefficients of ``P/Q`` from ``s``
    through order ``p + q``; zero input coefficients are measured against ``max |g|``."""
    re = reexpand(a, a.p + a.q)
    with working_precision(a.work_digits):
        scale = max(abs(x) for x in s.coeffs[:a.p + a.q + 1])
        if scale == 0:
            return max(abs(x) for x in re)
        return max(abs(x - y) / (abs(y) if y != 0 else scale) for x, y in zip(re, s.coeffs))


def reexpand(a: PadeApproximant, K: int) -> list:
    """Maclaurin coefficients of ``P/Q`` through order ``K`` by long division."""
    with working_precision(a.work_digits):
        out = []
        for i in range(K + 1):
            v = a.P[i] if i <= a.p else mpc(0)
            for j in range(1, min(i, a.q) + 1):
                v = v - a.Q[j] * out[i - j]
            out.append(v / a.Q[0])
    return out


# ---------------------------------------------------------------------------
# polynomial roots


def _trim(coeffs: Sequence, digits: int) -> list:
    c = list(coeffs)
    with working_precision(digits):
        scale = max(abs(x) for x in c)
        while len(c) > 1 and abs(c[-1]) <= scale * mpfr(10) ** (-(digits - 5)):
            c.pop()
    return c


@dataclass(frozen=True)
class Roots:
    roots: tuple
    residuals: tuple
    sweeps: int


def _backward_residual(c, z):
    val = horner(c, z)
    az = abs(z)
    scale = mpfr(0)
    for a in reversed(c):
        scale = scale * az + abs(a)
    return abs(val) / scale


def polynomial_roots(coeffs: Sequence, digits: int, max_sweeps: int = 500, polish: int = 2) -> Roots:
    """All roots of ``sum coeffs[j] z^j`` by Aberth-Ehrlich iteration.

    Start on the circle of radius ``|c_0 / c_n|^(1/n)``, iterate all roots
    simultaneously until the largest relative step is below
    ``10^-(d-10)``, then apply ``polish`` Newton steps per root.  Trailing
    coefficients negligible at precision ``d`` are dropped first.
    Residuals are ``|Q(z)| / sum |Q_j| |z|^j``.
    """
    c = _trim(coeffs, digits)
    n = len(c) - 1
    if n < 1:
        return Roots((), (), 0)
    with working_precision(digits):
        c = [mpc(x) for x in c]
        dc = [c[j] * j for j in range(1, n + 1)]
        lead = c[-1]
        if c[0] == 0:
            # factor out roots at zero before iterating
            k = next(i for i, x in enumerate(c) if x != 0)
            rest = polynomial_roots(c[k:], digits, max_sweeps, polish)
            zeros = (mpc(0),) * k
            return _order(Roots(zeros + rest.roots, (mpfr(0),) * k + rest.residuals, rest.sweeps))
        R = gmpy2.root(abs(c[0] / lead), n)
        two_pi = 2 * gmpy2.const_pi()
        z = np.array([R * gmpy2.exp(1j * (two_pi * j / n + mpfr("0.4"))) for j in range(n)], dtype=object)
        tol = mpfr(10) ** (-(digits - 10))
        eye = np.eye(n, dtype=bool)
        sweeps = 0
        step = mpfr("inf")
        for sweeps in range(1, max_sweeps + 1):
            pz = np.full(n, mpc(0), dtype=object)
            dpz = np.full(n, mpc(0), dtype=object)
            for a in reversed(c):
                pz = pz * z + a
            for a in reversed(dc):
                dpz = dpz * z + a
            diff = z[:, None] - z[None, :]
            diff[eye] = mpc(1)
            inv = 1 / diff
            inv[eye] = mpc(0)
            s = inv.sum(axis=1)
            ratio = np.array([pz[i] / dpz[i] if dpz[i] != 0 else pz[i] for i in range(n)], dtype=object)
            w = ratio / (1 - ratio * s)
            z = z - w
            step = max(abs(w[i]) / max(1, abs(z[i])) for i in range(n))
            if step < tol:
                break
        else:
            raise RootNonConvergence(f"Aberth iteration did not converge in {max_sweeps} sweeps "
                                     f"(last relative step {float(step):.3e})", tuple(z), step)
        z = list(z)
        for _ in range(polish):
            for i in range(n):
                d1 = horner(dc, z[i])
                if d1 != 0:
                    z[i] = z[i] - horner(c, z[i]) / d1
        res = tuple(_backward_residual(c, zi) for zi in z)
    return _order(Roots(tuple(z), res, sweeps))


def _order(r: Roots) -> Roots:
    idx = sorted(range(len(r.roots)), key=lambda i: (abs(r.roots[i]), gmpy2.phase(r.roots[i])))
    return Roots(tuple(r.roots[i] for i in idx), tuple(r.residuals[i] for i in idx), r.sweeps)


def denominator_roots(a: PadeApproximant, **kw) -> Roots:
    if a.q < 1:
        raise ValueError("denominator has no roots (q = 0)")
    return polynomial_roots(a.Q, a.work_digits, **kw)


def numerator_roots(a: PadeApproximant, **kw) -> Roots:
    return polynomial_roots(a.P, a.work_digits, **kw)


# ---------------------------------------------------------------------------
# stable poles


@dataclass(frozen=True)
class Pole:
    location: mpc
    match_distance: mpfr
    source_orders: tuple
    froissart: bool = False


@dataclass(frozen=True)
class PoleSet:
    poles: tuple
    filter_tol: float
    provenance: str = ""

    def stable(self) -> list[Pole]:
        """Poles not flagged as Froissart doublets."""
        return [p for p in self.poles if not p.froissart]

    def __len__(self):
        return len(self.poles)


def match_roots(r1: Sequence, r2: Sequence, tol) -> list[tuple[int, int, mpfr]]:
    """Mutual nearest neighbours ``(i, j, |r1_i - r2_j|)`` with distance ``<= tol``."""
    if not r1 or not r2:
        return []
    A = np.array(r1, dtype=object)
    B = np.array(r2, dtype=object)
    dist = np.abs(A[:, None] - B[None, :])
    nn12 = [min(range(len(B)), key=lambda j: (dist[i, j], j)) for i in range(len(A))]
    nn21 = [min(range(len(A)), key=lambda i: (dist[i, j], i)) for j in range(len(B))]
    out = []
    for i, j in enumerate(nn12):
        if nn21[j] == i and dist[i, j] <= tol:
            out.append((i, j, dist[i, j]))
    return out


def stable_poles(a1: PadeApproximant, a2: PadeApproximant, filter_tol="1e-3",
                 froissart_factor: int = 10, froissart_scale: str = "resolution",
                 roots1: Roots | None = None, roots2: Roots | None = None) -> PoleSet:
    """Denominator zeros common to both approximants, reported at the pair midpoint.

    A pole is flagged as a Froissart doublet when a numerator zero of
    either approximant lies within ``froissart_factor`` times a reference
    length of it.  With ``froissart_scale="resolution"`` that length is the
    root resolution ``10^-(d/2)`` of the data, so only pairs cancelling at
    noise level are flagged.  ``"match"`` uses the pole's own match distance
    instead, which also flags genuine poles of small residue.
    """
    if a1.digits != a2.digits:
        raise xf.PrecisionMismatch("approximants at different precision")
    if froissart_scale not in ("resolution", "match"):
        raise ValueError(f"unknown Froissart scale {froissart_scale!r}")
    d = a1.digits
    r1 = (roots1 or denominator_roots(a1)).roots
    r2 = (roots2 or denominator_roots(a2)).roots
    with working_precision(d):
        tol = xf.xreal(filter_tol, d)
        pairs = match_roots(list(r1), list(r2), tol)
        zeros = []
        if pairs:
            for a in (a1, a2):
                if a.p >= 1:
                    zeros.extend(numerator_roots(a).roots)
        floor = mpfr(10) ** (-(d // 2))
        poles = []
        for i, j, dist in pairs:
            mid = (r1[i] + r2[j]) / 2
            ref = floor if froissart_scale == "resolution" else max(dist, floor)
            near = ref * froissart_factor
            fr = any(abs(zr - mid) <= near for zr in zeros)
            poles.append(Pole(mid, dist, ((a1.p, a1.q), (a2.p, a2.q)), fr))
        poles.sort(key=lambda p: (abs(p.location), gmpy2.phase(p.location)))
    return PoleSet(tuple(poles), float(tol), a1.provenance)


def map_conformal(poles, exponent: int = 3, digits: int | None = None) -> list:
    """``b(eps) = 1 - eps^exponent`` at each pole (``PoleSet`` or plain locations)."""
    locs = [p.location for p in poles.poles] if isinstance(poles, PoleSet) else list(poles)
    if not locs:
        return []
    d = digits or max(int(xf.bits_to_digits(max(z.precision))) for z in map(mpc, locs))
    with working_precision(max(d, 15)):
        return [1 - mpc(z) ** exponent for z in locs]


def unit_circle_summary(images: Sequence, threshold: float = 0.15) -> dict:
    dev = [abs(float(abs(b)) - 1.0) for b in images]
    if not dev:
        return {"count": 0, "fraction_within": 0.0, "threshold": threshold}
    return {
        "count": len(dev),
        "fraction_within": sum(x < threshold for x in dev) / len(dev),
        "threshold": threshold,
        "median_abs_b_minus_1": float(np.median(dev)),
        "max_abs_b_minus_1": max(dev),
    }


CSV_HEADER = "re,im,modulus,match_distance,b_re,b_im,abs_b_minus_1"


def _s30(x) -> str:
    return xf.decimal_string(mpfr(x), 30)


def poles_csv_lines(poles: PoleSet, exponent: int = 3, include_flagged: bool = False) -> list[str]:
    chosen = list(poles.poles) if include_flagged else poles.stable()
    lines = [CSV_HEADER]
    if not chosen:
        return lines
    d = max(15, int(xf.bits_to_digits(max(chosen[0].location.precision))))
    images = map_conformal([p.location for p in chosen], exponent, d)
    with working_precision(d):
        for p, b in zip(chosen, images):
            z = p.location
            lines.append(",".join([_s30(z.real), _s30(z.imag), _s30(abs(z)), _s30(p.match_distance),
                                   _s30(b.real), _s30(b.imag), _s30(abs(abs(b) - 1))]))
    return lines


def write_poles_csv(poles: PoleSet, path, exponent: int = 3) -> Path:
    path = Path(path)
    path.write_text("\n".join(poles_csv_lines(poles, exponent)) + "\n")
    return path


def read_poles_csv(path, digits: int = 30) -> list[mpc]:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0].strip() != CSV_HEADER:
        raise xf.FormatError("unexpected poles CSV header")
    with working_precision(max(digits, 15)):
        return [mpc(mpfr(r.split(",")[0]), mpfr(r.split(",")[1])) for r in rows[1:] if r.strip()]


def write_plot_data(poles: PoleSet, out_dir, exponent: int = 3, circle_points: int = 361) -> list[Path]:
    """Two-column scatter files for the eps-plane and the b-plane, plus the unit circle."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    st = poles.stable()
    eps = [complex(p.location) for p in st]
    bs = [complex(b) for b in map_conformal([p.location for p in st], exponent, 30)] if st else []
    files = []
    for name, pts in (("poles_eps.dat", eps), ("poles_b.dat", bs)):
        f = out / name
        f.write_text("# re im\n" + "".join(f"{z.real:.17g} {z.imag:.17g}\n" for z in pts))
        files.append(f)
    f = out / "unit_circle.dat"
    f.write_text("# re im\n" + "".join(
        f"{math.cos(2 * math.pi * j / (circle_points - 1)):.17g} "
        f"{math.sin(2 * math.pi * j / (circle_points - 1)):.17g}\n" for j in range(circle_points)))
    files.append(f)
    return files
