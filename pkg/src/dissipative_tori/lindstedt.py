"""Formal power series in eps for the invariant circle of the dissipative standard map.

The map is

    y' = b y + c + eps V'(x),    x' = x + y',    b = 1 - eps^p,

and an invariant circle with rotation number omega is written
``x = theta + u(theta)``.  Substituting ``u = sum u_k eps^k`` and
``c = sum c_k eps^k`` into the invariance equation and matching powers
gives, with ``S_k`` the eps^k coefficient of ``-eps V'(theta + u)``,

    L_omega u_k = S_k                                   k < p
    L_omega u_p = S_p                  (c_p = omega)
    L_omega u_k = S_k - u_{k-p} + u_{k-p}(. - omega) + c_k,  c_k = -<S_k>,  k > p

Every ``u_k`` is normalised to zero average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from . import xfourier as xf
from .xfourier import (
    FormatError,
    Frequency,
    PeriodicFunction,
    PrecisionMismatch,
    working_precision,
)

SERIES_VERSION = "v1"


@dataclass(frozen=True)
class MapParams:
    """Parameters of the map family.

    ``harmonics`` lists ``(h, a_h, b_h)`` with
    ``V'(x) = offset + sum_h a_h sin(2 pi h x) + b_h cos(2 pi h x)``.
    ``offset`` must vanish unless ``strict=False`` (used only for negative
    controls).
    """

    omega: Frequency
    harmonics: tuple
    conformal_exponent: int = 3
    offset: object = 0
    strict: bool = True

    def __post_init__(self):
        if self.conformal_exponent < 1:
            raise ValueError("conformal exponent must be >= 1")
        if not self.harmonics:
            raise ValueError("V' needs at least one harmonic")
        d = self.omega.digits
        norm = []
        for h, a, b in self.harmonics:
            if int(h) < 1:
                raise ValueError("harmonic numbers must be positive")
            norm.append((int(h), xf.xscalar(a, d), xf.xscalar(b, d)))
        object.__setattr__(self, "harmonics", tuple(norm))
        off = xf.xscalar(self.offset, d)
        object.__setattr__(self, "offset", off)
        if self.strict and off != 0:
            raise ValueError("V' must have zero mean")

    @classmethod
    def standard(cls, digits: int, omega: Frequency | None = None,
                 conformal_exponent: int = 3) -> "MapParams":
        """``V'(x) = sin(2 pi x) / (2 pi)`` at the golden mean."""
        if omega is None:
            omega = Frequency.golden_mean(digits)
        with working_precision(digits):
            a = 1 / (2 * gmpy2.const_pi())
        return cls(omega, ((1, a, 0),), conformal_exponent)

    @property
    def digits(self) -> int:
        return self.omega.digits

    @property
    def max_harmonic(self) -> int:
        return max(h for h, _, _ in self.harmonics)

    @property
    def is_real(self) -> bool:
        return all(a.imag == 0 and b.imag == 0 for _, a, b in self.harmonics) and self.offset.imag == 0

    def b(self, eps) -> mpc:
        with working_precision(self.digits):
            return 1 - xf.xscalar(eps, self.digits) ** self.conformal_exponent

    def V_prime(self, x):
        """``V'`` at a scalar or elementwise on an object array."""
        with working_precision(self.digits):
            two_pi = 2 * gmpy2.const_pi()
            if isinstance(x, np.ndarray):
                out = np.full(x.shape, self.offset, dtype=object)
                for h, a, b in self.harmonics:
                    arg = x * (two_pi * h)
                    if a != 0:
                        out = out + a * np.array([gmpy2.sin(t) for t in arg], dtype=object)
                    if b != 0:
                        out = out + b * np.array([gmpy2.cos(t) for t in arg], dtype=object)
                return out
            out = self.offset
            for h, a, b in self.harmonics:
                out = out + a * gmpy2.sin(two_pi * h * x) + b * gmpy2.cos(two_pi * h * x)
            return out


@dataclass(frozen=True)
class TruncationSchedule:
    """Retained Fourier modes ``M_k = min(M0 + delta k, M_cap)`` for order ``k``."""

    M0: int = 32
    delta: int = 2
    M_cap: int = 2048

    def __post_init__(self):
        if self.M0 < 1 or self.delta < 0 or self.M_cap < 1:
            raise ValueError("truncation schedule needs M0 >= 1, delta >= 0, M_cap >= 1")

    def M(self, k: int) -> int:
        return min(self.M0 + self.delta * k, self.M_cap)


@dataclass(frozen=True, eq=False)
class LindstedtSeries:
    N: int
    u: tuple
    c: tuple
    params: MapParams
    digits: int
    schedule: TruncationSchedule = field(default_factory=TruncationSchedule)

    def __post_init__(self):
        if len(self.u) != self.N + 1 or len(self.c) != self.N + 1:
            raise ValueError("series needs N+1 coefficients of each kind")

    @property
    def omega(self) -> Frequency:
        return self.params.omega

    @property
    def M(self) -> int:
        return max(f.M for f in self.u)


def _bandwidth(params: MapParams, schedule: TruncationSchedule, k: int) -> int:
    return min(params.max_harmonic * k, schedule.M(k))


def compute_series(params: MapParams, N: int, schedule: TruncationSchedule | None = None,
                   conservative: bool = False, zero_mean_tol=None, progress=None) -> LindstedtSeries:
    """Lindstedt coefficients ``u_0..u_N``, ``c_0..c_N``.

    With ``conservative=True`` the symplectic recursion ``L_omega u_k = S_k``
    is run instead (``b = 1``, ``c = 0``); the per-order means of ``S_k`` are
    then projected out and recorded on the returned object as
    ``S_means``.
    """
    if N < 0:
        raise ValueError("order must be non-negative")
    schedule = schedule or TruncationSchedule()
    d = params.digits
    omega = params.omega
    p = params.conformal_exponent
    real = params.is_real
    hmax = params.max_harmonic
    n = xf.grid_size(hmax * (N + 1), 16)
    thetas = xf.grid_points(n, d)
    recs = [(a, b, xf.TrigRecurrence(thetas, d, harmonic=h, capacity=max(N, 1), real=real))
            for h, a, b in params.harmonics]
    u = [PeriodicFunction.zeros(0, d)]
    c = [xf.xscalar(0, d)]
    S_means = [mpfr(0)]
    S_norms = [mpfr(0)]
    with working_precision(d):
        for k in range(1, N + 1):
            # S_k = -[eps^{k-1}] V'(theta + u)
            grid = np.full(n, mpfr(0) if real else mpc(0), dtype=object)
            for a, b, rec in recs:
                if a != 0:
                    grid = grid - (a.real if real else a) * rec.S(k - 1)
                if b != 0:
                    grid = grid - (b.real if real else b) * rec.C(k - 1)
            if k == 1:
                grid = grid - (params.offset.real if real else params.offset)
            Mk = _bandwidth(params, schedule, k)
            S_k = PeriodicFunction(xf.grid_to_modes(grid, Mk), d)
            S_means.append(abs(xf.mean(S_k)))
            S_norms.append(xf.norm_sobolev(S_k, 0))
            if conservative:
                ck = mpc(0)
                rhs = S_k - xf.mean(S_k)
            elif k < p:
                ck = mpc(0)
                rhs = S_k
            elif k == p:
                ck = mpc(omega.omega)
                rhs = S_k
            else:
                ck = -xf.mean(S_k)
                prev = u[k - p]
                rhs = S_k - prev + xf.shift(prev, -omega.omega) + ck
                rhs = _zero_mode(rhs)
            u_k = xf.solve_Lomega(rhs, omega, zero_mean_tol=zero_mean_tol)
            u.append(u_k)
            c.append(ck)
            if k < N:
                g = xf.modes_to_grid(u_k.coeffs, n)
                if real:
                    g = xf._real_array(g)
                for _, _, rec in recs:
                    rec.push(g)
            if progress is not None:
                progress(k)
    series = LindstedtSeries(N, tuple(u), tuple(c), params, d, schedule)
    if conservative:
        object.__setattr__(series, "S_means", S_means)
        object.__setattr__(series, "S_norms", S_norms)
    return series


def _zero_mode(f: PeriodicFunction) -> PeriodicFunction:
    # the mean cancels by construction; remove the last-bit residue
    c = f.coeffs.copy()
    c[f.M] = mpc(0)
    return PeriodicFunction(c, f.digits)


def source_terms(series: LindstedtSeries) -> list[PeriodicFunction]:
    """Recompute ``S_0..S_N`` from the stored ``u_k`` through :func:`xfourier.trig_orders`."""
    params = series.params
    d = series.digits
    N = series.N
    S = [PeriodicFunction.zeros(0, d)]
    if N == 0:
        return S
    out = None
    for h, a, b in params.harmonics:
        sn, cs = xf.trig_orders(list(series.u[:N]), N - 1, harmonic=h)
        with working_precision(d):
            part = [sn[k] * (-a) + cs[k] * (-b) for k in range(N)]
        out = part if out is None else [x + y for x, y in zip(out, part)]
    out[0] = out[0] - params.offset
    return S + out


def evaluate(series: LindstedtSeries, eps, upTo: int | None = None) -> tuple[PeriodicFunction, mpc]:
    """Horner evaluation of the truncated series ``sum_{k<=upTo} (u_k, c_k) eps^k``."""
    N = series.N if upTo is None else upTo
    if N > series.N or N < 0:
        raise ValueError(f"upTo must lie in [0, {series.N}]")
    d = series.digits
    M = max(f.M for f in series.u[:N + 1])
    with working_precision(d):
        e = xf.xscalar(eps, d)
        acc = series.u[N].resize(M).coeffs.copy()
        cacc = series.c[N]
        for k in range(N - 1, -1, -1):
            acc = acc * e + series.u[k].resize(M).coeffs
            cacc = cacc * e + series.c[k]
        return PeriodicFunction(acc, d), cacc


def defect_grid_size(M: int) -> int:
    return xf.grid_size(2 * M, 1024)


def invariance_error(params: MapParams, u: PeriodicFunction, c, eps, n: int | None = None) -> np.ndarray:
    """Grid samples of

    ``u(t+w) - (1+b) u(t) + b u(t-w) + (1-b) w - c + eps V'(t + u(t))``.
    """
    d = u.digits
    if n is None:
        n = defect_grid_size(u.M)
    if n < 2 * u.M + 1:
        raise ValueError("grid too small for the retained modes")
    w = params.omega.omega
    with working_precision(d):
        e = xf.xscalar(eps, d)
        b = 1 - e ** params.conformal_exponent
        c = xf.xscalar(c, d)
        ph = xf.rotation_phases(w, u.M, d)
        up = xf.modes_to_grid(u.coeffs * ph, n)
        um = xf.modes_to_grid(u.coeffs * np.array([z.conjugate() for z in ph], dtype=object), n)
        u0 = xf.modes_to_grid(u.coeffs, n)
        thetas = xf.grid_points(n, d)
        E = up - (1 + b) * u0 + b * um + ((1 - b) * w - c)
        if e != 0:
            E = E + params.V_prime(thetas + u0) * e
        return E


def defect(params: MapParams, u: PeriodicFunction, c, eps, grid: int | None = None) -> mpfr:
    """Sup over a uniform grid of the invariance error."""
    E = invariance_error(params, u, c, eps, grid)
    with working_precision(u.digits):
        return max(abs(z) for z in E)


def embedding(u: PeriodicFunction, omega: Frequency) -> tuple[PeriodicFunction, PeriodicFunction]:
    """Periodic part of the circle ``K(t) = (t + u(t), omega + u(t) - u(t - omega))``."""
    with working_precision(u.digits):
        K2 = u - xf.shift(u, -omega.omega) + omega.omega
    return u, K2


def map_step(params: MapParams, x, y, c, eps, forcing_sign: int = 1):
    """One iterate ``y' = b y + c + s eps V'(x)``, ``x' = x + y'`` (elementwise on arrays).

    ``forcing_sign`` is ``s``.  The invariance functional above is the
    orbit equation of the map with ``s = -1``; ``s = +1`` is the same map
    conjugated by ``x -> x + 1/2`` whenever ``V'`` has only odd harmonics.
    """
    with working_precision(params.digits):
        e = xf.xscalar(eps, params.digits)
        b = 1 - e ** params.conformal_exponent
        y1 = y * b + c + params.V_prime(x) * (e * forcing_sign)
        return x + y1, y1


def odd_potential(params: MapParams) -> bool:
    return params.offset == 0 and all(h % 2 == 1 for h, _, _ in params.harmonics)


def conjugacy_error(params: MapParams, u: PeriodicFunction, c, eps, n: int | None = None,
                    forcing_sign: int | None = None) -> mpfr:
    """Sup over the grid of ``f(K(t)) - K(t + omega)``, both components, by direct map iteration.

    With ``forcing_sign=+1`` the circle is translated by ``x -> x + 1/2``
    before iterating (allowed only for odd potentials).  The default picks
    ``+1`` for odd potentials and ``-1`` otherwise.
    """
    d = u.digits
    if n is None:
        n = defect_grid_size(u.M)
    if forcing_sign is None:
        forcing_sign = 1 if odd_potential(params) else -1
    if forcing_sign == 1 and not odd_potential(params):
        raise ValueError("the half-period translation needs an odd potential")
    w = params.omega.omega
    _, K2 = embedding(u, params.omega)
    with working_precision(d):
        half = mpfr(1) / 2 if forcing_sign == 1 else mpfr(0)
        c = xf.xscalar(c, d)
        thetas = xf.grid_points(n, d)
        x = thetas + half + xf.modes_to_grid(u.resize(K2.M).coeffs, n)
        y = xf.modes_to_grid(K2.coeffs, n)
        x1, y1 = map_step(params, x, y, c, eps, forcing_sign)
        x_t = thetas + half + w + xf.modes_to_grid(xf.shift(u, w).resize(K2.M).coeffs, n)
        y_t = xf.modes_to_grid(xf.shift(K2, w).coeffs, n)
        return max(max(abs(a - b) for a, b in zip(x1, x_t)), max(abs(a - b) for a, b in zip(y1, y_t)))


def symplectic_zero_average_check(params: MapParams, N: int, with_norms: bool = False):
    """``|<S_k>|`` for ``k = 0..N`` along the conservative recursion.

    In the symplectic case these vanish identically, so the returned
    values measure roundoff.  ``S_0`` is identically zero.
    """
    series = compute_series(params, N, conservative=True)
    if with_norms:
        return list(zip(series.S_means, series.S_norms))
    return list(series.S_means)


# ---------------------------------------------------------------------------
# serialization


def _format_c(z) -> str:
    return f"{xf.decimal_string(z.real)} {xf.decimal_string(z.imag)}"


def series_lines(series: LindstedtSeries) -> list[str]:
    p = series.params
    d = series.digits
    s = series.schedule
    with working_precision(d):
        pot = ";".join(f"{h}:{_format_c(a).replace(' ', ':')}:{_format_c(b).replace(' ', ':')}"
                       for h, a, b in p.harmonics)
        lines = [
            f"#ls {SERIES_VERSION}",
            f"N={series.N}",
            f"digits={d}",
            f"omega={xf.decimal_string(p.omega.omega)}",
            f"exponent={p.conformal_exponent}",
            f"schedule={s.M0},{s.delta},{s.M_cap}",
            f"diophantine={p.omega.nu!r},{p.omega.tau!r}",
            f"potential={pot}",
            f"offset={_format_c(p.offset).replace(' ', ':')}",
        ]
        for k in range(series.N + 1):
            lines.append(f"[{k}] c={_format_c(series.c[k])}")
            lines.extend(xf.dump_lines(series.u[k]))
    return lines


def save_series(series: LindstedtSeries, path) -> Path:
    path = Path(path)
    path.write_text("\n".join(series_lines(series)) + "\n")
    return path


def _parse_c(text: str, d: int) -> mpc:
    re_, im_ = text.replace(":", " ").split()
    with working_precision(d):
        return mpc(mpfr(re_), mpfr(im_))


def parse_series(lines: Sequence[str], digits: int | None = None) -> LindstedtSeries:
    head = lines[0].strip().split()
    if len(head) != 2 or head[0] != "#ls":
        raise FormatError(f"not a Lindstedt series file: {lines[0]!r}")
    if head[1] != SERIES_VERSION:
        raise FormatError(f"unsupported series format version {head[1]!r}")
    hdr = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("["):
        k, _, v = lines[i].strip().partition("=")
        hdr[k] = v
        i += 1
    N = int(hdr["N"])
    d = int(hdr["digits"])
    if digits is not None and digits != d:
        raise PrecisionMismatch(f"file was written at {d} digits, {digits} requested")
    nu, tau = (float(x) for x in hdr.get("diophantine", "0.381966,1.0").split(","))
    omega = Frequency(xf.xreal(hdr["omega"], d), d, nu=nu, tau=tau)
    harmonics = []
    for item in hdr["potential"].split(";"):
        h, ar, ai, br, bi = item.split(":")
        harmonics.append((int(h), _parse_c(f"{ar} {ai}", d), _parse_c(f"{br} {bi}", d)))
    offset = _parse_c(hdr.get("offset", "0:0"), d)
    params = MapParams(omega, tuple(harmonics), int(hdr["exponent"]), offset=offset,
                       strict=offset == 0)
    M0, delta, M_cap = (int(x) for x in hdr.get("schedule", "32,2,2048").split(","))
    u, c = [], []
    for k in range(N + 1):
        tag, _, rest = lines[i].partition(" ")
        if tag != f"[{k}]" or not rest.startswith("c="):
            raise FormatError(f"expected block [{k}], got {lines[i]!r}")
        c.append(_parse_c(rest[2:], d))
        f, i = xf.parse_lines(lines, i + 1)
        if f.digits != d:
            raise PrecisionMismatch("coefficient block precision differs from header")
        u.append(f)
    return LindstedtSeries(N, tuple(u), tuple(c), params, d, TruncationSchedule(M0, delta, M_cap))


def load_series(path, digits: int | None = None) -> LindstedtSeries:
    return parse_series(Path(path).read_text().splitlines(), digits)
