"""Quasi-Newton correction of ``(u, c)`` at fixed complex eps, continuation and monodromy.

One step solves the linearised invariance equation with the term
``E' v / h'`` dropped, which leaves an operator that factors into two
constant-coefficient difference equations:

    D_b phi = -h' E,   D_b nu = -h',      D_b f = f(. + w) - b f
    delta = <phi / g> / <nu / g>,        g = h' h'(. - w)
    D_- w = (phi - delta nu) / (-g),     D_- f = f(. - w) - f
    v = h' w,  (u, c) <- (u + v, c + delta)

where ``h' = 1 + du/dtheta``.  The constant in ``w`` is fixed so that the
corrected ``u`` keeps zero average.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from . import lindstedt as L
from . import xfourier as xf
from .xfourier import PeriodicFunction, working_precision

log = logging.getLogger(__name__)

DEFAULT_GRID = 512


class DegenerateH(ArithmeticError):
    """``1 + u'`` comes close to zero: the circle is no longer a graph."""


class NoDeltaSolution(ArithmeticError):
    """The average fixing the drift correction vanishes."""


class NonConvergence(RuntimeError):
    def __init__(self, message, history=(), best=None):
        super().__init__(message)
        self.history = list(history)
        self.best = best


class StepFailure(RuntimeError):
    def __init__(self, message, log_records=(), last=None):
        super().__init__(message)
        self.log = list(log_records)
        self.last = last


@dataclass(frozen=True, eq=False)
class TorusSolution:
    eps: mpc
    u: PeriodicFunction
    c: mpc
    defect: mpfr
    iterations: int = 0
    history: tuple = ()

    @property
    def digits(self) -> int:
        return self.u.digits


@dataclass(frozen=True)
class LoopPath:
    center: complex
    radius: float
    steps: int = 64
    start_angle: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("loop radius must be positive")
        if self.steps < 8:
            raise ValueError("a loop needs at least 8 steps")

    def point(self, j: float, digits: int) -> mpc:
        with working_precision(digits):
            two_pi = 2 * gmpy2.const_pi()
            ang = mpfr(self.start_angle) + two_pi * mpfr(j) / self.steps
            return xf.xscalar(self.center, digits) + mpfr(self.radius) * gmpy2.exp(mpc(0, ang))

    def points(self, digits: int) -> list:
        """``eps_0 .. eps_steps``; the last coincides with the first."""
        return [self.point(j, digits) for j in range(self.steps + 1)]

    def clearance(self, poles: Sequence) -> float:
        """Smallest distance from the circle to any of ``poles``."""
        c = complex(self.center)
        return min((abs(abs(complex(p) - c) - self.radius) for p in poles), default=math.inf)


def grid_modes(n: int) -> int:
    """Retained modes for an ``n``-point Newton grid (``n >= 4M + 1``)."""
    return (n - 1) // 4


@dataclass
class StepInfo:
    delta: mpc
    v_norm: mpfr
    min_h: mpfr
    defect_before: mpfr
    defect_after: mpfr


def _h_prime(u: PeriodicFunction) -> PeriodicFunction:
    with working_precision(u.digits):
        return xf.derivative(u) + 1


def newton_step(params: L.MapParams, sol: TorusSolution, n: int = DEFAULT_GRID,
                h_floor="1e-6", divisor_floor=None, info: list | None = None) -> TorusSolution:
    """One quasi-Newton correction.  Appends a :class:`StepInfo` to ``info`` if given."""
    d = sol.digits
    M = grid_modes(n)
    omega = params.omega
    w = omega.omega
    with working_precision(d):
        eps = mpc(sol.eps)
        b = 1 - eps ** params.conformal_exponent
        u = sol.u.resize(M) if sol.u.M > M else sol.u
        E_grid = L.invariance_error(params, u, sol.c, eps, n)
        defect0 = max(abs(z) for z in E_grid)
        hp = _h_prime(u)
        hp_grid = xf.modes_to_grid(hp.coeffs, n)
        min_h = min(abs(z) for z in hp_grid)
        if min_h < xf.xreal(h_floor, d):
            raise DegenerateH(f"min |1 + u'| = {float(min_h):.3e} below floor")
        g_grid = hp_grid * xf.modes_to_grid(xf.shift(hp, -w).coeffs, n)
        to_pf = lambda vals: PeriodicFunction(xf.grid_to_modes(vals, M), d)
        phi = xf.solve_Dplus_b(to_pf(-(hp_grid * E_grid)), omega, b, divisor_floor)
        nu = xf.solve_Dplus_b(to_pf(-hp_grid), omega, b, divisor_floor)
        phi_g = xf.modes_to_grid(phi.coeffs, n)
        nu_g = xf.modes_to_grid(nu.coeffs, n)
        a_phi = sum(phi_g / g_grid) / n
        a_nu = sum(nu_g / g_grid) / n
        if abs(a_nu) < mpfr(10) ** (-(d - 5)):
            raise NoDeltaSolution(f"<nu / g> = {complex(a_nu)!r} vanishes")
        delta = a_phi / a_nu
        rhs = to_pf((phi_g - nu_g * delta) / (-g_grid))
        rhs = _drop_mean(rhs)
        wfun = xf.solve_Dminus(rhs, omega, divisor_floor=divisor_floor)
        v = PeriodicFunction(xf.grid_to_modes(hp_grid * xf.modes_to_grid(wfun.coeffs, n), M), d)
        # w is defined up to a constant t; v shifts by t h' and <h'> = 1
        t = -(xf.mean(u) + xf.mean(v))
        v = v + hp * t
        u_new = u.resize(M) + v
        c_new = mpc(sol.c) + delta
        defect1 = L.defect(params, u_new, c_new, eps, n)
    if info is not None:
        info.append(StepInfo(delta, xf.norm_sobolev(v, 0), min_h, defect0, defect1))
    return TorusSolution(eps, u_new, c_new, defect1, sol.iterations + 1,
                         sol.history + (defect1,))


def _shifted_grids(f: PeriodicFunction, w, n: int):
    """Samples of ``f(. - w), f, f(. + w)`` on the ``n``-point grid."""
    return [xf.modes_to_grid(xf.shift(f, a).coeffs, n) for a in (-w, 0, w)]


def modified_operator_direct(u: PeriodicFunction, v: PeriodicFunction, b, omega: xf.Frequency,
                             n: int = DEFAULT_GRID) -> np.ndarray:
    """Grid samples of ``v(.+w) - (1+b) v + b v(.-w) - v (h'(.+w) - (1+b) h' + b h'(.-w)) / h'``."""
    d = u.digits
    with working_precision(d):
        b = xf.xscalar(b, d)
        hm, h0, hp = _shifted_grids(_h_prime(u), omega.omega, n)
        vm, v0, vp = _shifted_grids(v, omega.omega, n)
        return vp - (1 + b) * v0 + b * vm - v0 * (hp - (1 + b) * h0 + b * hm) / h0


def modified_operator_factored(u: PeriodicFunction, v: PeriodicFunction, b, omega: xf.Frequency,
                               n: int = DEFAULT_GRID) -> np.ndarray:
    """The same operator as ``(1/h') D_b[-h' h'(.-w) D_-(v/h')]``, evaluated pointwise."""
    d = u.digits
    with working_precision(d):
        b = xf.xscalar(b, d)
        hm, h0, hp = _shifted_grids(_h_prime(u), omega.omega, n)
        vm, v0, vp = _shifted_grids(v, omega.omega, n)
        wm, w0, wp = vm / hm, v0 / h0, vp / hp
        G0 = -h0 * hm * (wm - w0)          # G(theta)
        Gp = -hp * h0 * (w0 - wp)          # G(theta + w)
        return (Gp - b * G0) / h0


def _drop_mean(f: PeriodicFunction) -> PeriodicFunction:
    c = f.coeffs.copy()
    c[f.M] = mpc(0)
    return PeriodicFunction(c, f.digits)


def seed_from_series(series: L.LindstedtSeries, eps, order: int | None = None,
                     digits: int | None = None) -> tuple[PeriodicFunction, mpc]:
    """Lindstedt guess at ``eps`` (order ``min(N, 40)`` by default) rounded to ``digits``."""
    order = min(series.N, 40) if order is None else order
    u, c = L.evaluate(series, eps, order)
    if digits is not None and digits != series.digits:
        u, c = change_precision(u, digits), xf.xscalar(c, digits)
    return u, c


def change_precision(f: PeriodicFunction, digits: int) -> PeriodicFunction:
    with working_precision(digits):
        return PeriodicFunction(np.array([mpc(z) for z in f.coeffs], dtype=object), digits)


def measure(params: L.MapParams, eps, u: PeriodicFunction, c, n: int = DEFAULT_GRID) -> TorusSolution:
    d = u.digits
    with working_precision(d):
        eps = xf.xscalar(eps, d)
        c = xf.xscalar(c, d)
        M = grid_modes(n)
        u = u.resize(M) if u.M > M else u
        return TorusSolution(eps, u, c, L.defect(params, u, c, eps, n), 0, ())


def solve_at(params: L.MapParams, eps, guess: tuple, tol=None, max_iter: int = 20,
             n: int = DEFAULT_GRID, basin="1e-2", divisor_floor=None) -> TorusSolution:
    """Newton iteration from ``guess = (u, c)`` until the defect drops below ``tol``.

    Fails with :class:`NonConvergence` when the guess is outside ``basin``,
    when the defect stops decreasing before reaching ``tol``, or after
    ``max_iter`` steps.
    """
    u0, c0 = guess
    d = u0.digits
    if tol is None:
        tol = mpfr(10) ** (-(d - 20))
    sol = measure(params, eps, u0, c0, n)
    with working_precision(d):
        tol = xf.xreal(tol, d)
        basin = xf.xreal(basin, d)
    hist = [sol.defect]
    sol = TorusSolution(sol.eps, sol.u, sol.c, sol.defect, 0, (sol.defect,))
    if sol.defect < tol:
        return sol
    if sol.defect > basin:
        raise NonConvergence(f"guess defect {float(sol.defect):.3e} outside the basin", hist, sol)
    best = sol
    stalls = 0
    for _ in range(max_iter):
        try:
            new = newton_step(params, sol, n, divisor_floor=divisor_floor)
        except (xf.DivisorUnderflow, DegenerateH, NoDeltaSolution, ArithmeticError) as err:
            raise NonConvergence(f"Newton step failed: {err}", hist, best) from err
        hist.append(new.defect)
        if new.defect < best.defect:
            best = new
        if new.defect < tol:
            return new
        if new.defect > basin:
            raise NonConvergence(f"defect grew to {float(new.defect):.3e}", hist, best)
        # past the quadratic phase the defect no longer improves
        stalls = stalls + 1 if new.defect >= sol.defect / 2 else 0
        if stalls >= 2:
            raise NonConvergence(f"defect stalled at {float(new.defect):.3e} above tolerance", hist, best)
        sol = new
    raise NonConvergence(f"no convergence in {max_iter} iterations", hist, best)


def reach(params: L.MapParams, series: L.LindstedtSeries, eps, tol=None, seed_modulus="0.15",
          legs: int = 8, order: int | None = None, digits: int | None = None,
          n: int = DEFAULT_GRID, records: list | None = None, max_iter: int = 20) -> TorusSolution:
    """Solve at ``eps`` by seeding from the Lindstedt series at ``|eps| = seed_modulus`` on
    the same ray, then continuing along the ray in ``legs`` equal steps."""
    d = digits or series.digits
    with working_precision(d):
        target = xf.xscalar(eps, d)
        r = xf.xreal(seed_modulus, d)
        if abs(target) <= r:
            start_eps, legs = target, 0
        else:
            start_eps = target * (r / abs(target))
    u, c = seed_from_series(series, start_eps, order, d)
    sol = solve_at(params, start_eps, (u, c), tol, max_iter, n=n)
    if legs == 0:
        return sol
    with working_precision(d):
        path = [start_eps + (target - start_eps) * (mpfr(j) / legs) for j in range(1, legs + 1)]
    return continue_path(params, path, sol, tol, n=n, max_iter=max_iter, records=records)[-1]


def log_record(step: int, sol: TorusSolution) -> dict:
    e, c = complex(sol.eps), complex(sol.c)
    return {"step": step, "eps_re": e.real, "eps_im": e.imag, "c_re": c.real, "c_im": c.imag,
            "defect": float(sol.defect), "iterations": sol.iterations}


def continue_path(params: L.MapParams, path: Sequence, start: TorusSolution, tol=None,
                  max_halvings: int = 8, n: int = DEFAULT_GRID, max_iter: int = 20,
                  on_point: Callable | None = None, records: list | None = None) -> list[TorusSolution]:
    """Continue ``start`` through the points of ``path`` (start excluded).

    Each leg from the last accepted point to the next target is walked in
    sub-steps; a failed solve halves the sub-step (at most ``max_halvings``
    times), and after two consecutive successes the sub-step doubles back
    towards the full leg.
    """
    d = start.digits
    records = records if records is not None else []
    out = []
    cur = start
    step_no = 0
    for target in path:
        with working_precision(d):
            target = xf.xscalar(target, d)
        frac = mpfr(1)
        halvings = 0
        accepts = 0
        with working_precision(d):
            origin = cur.eps
        while True:
            with working_precision(d):
                left = target - cur.eps
                full = target - origin
                # remaining leg fraction
                remaining = abs(left) / abs(full) if full != 0 else mpfr(0)
                h = min(frac, remaining)
                nxt = target if h >= remaining else cur.eps + left * (h / remaining)
            try:
                new = solve_at(params, nxt, (cur.u, cur.c), tol, max_iter, n)
            except NonConvergence as err:
                halvings += 1
                accepts = 0
                if halvings > max_halvings:
                    raise StepFailure(f"continuation stalled near eps={complex(cur.eps)} after "
                                      f"{max_halvings} halvings: {err}", records, cur) from err
                frac = frac / 2
                log.info("halving step to %s at eps=%s", float(frac), complex(cur.eps))
                continue
            step_no += 1
            cur = new
            records.append(log_record(step_no, cur))
            if on_point is not None:
                on_point(cur)
            if nxt is target:
                break
            accepts += 1
            if accepts >= 2 and frac < 1:
                frac = min(frac * 2, mpfr(1))
                accepts = 0
        out.append(cur)
    return out


@dataclass
class MonodromyResult:
    defect_u: mpfr
    defect_c: mpfr
    instances: list
    solutions: list
    records: list = field(default_factory=list)
    loop: LoopPath | None = None


def monodromy_loop(params: L.MapParams, loop: LoopPath, seed: TorusSolution, tol=None,
                   turns: int = 1, n: int = DEFAULT_GRID, n_instances: int = 6,
                   max_halvings: int = 8, max_iter: int = 20, polish: bool = True) -> MonodromyResult:
    """Continue ``seed`` (converged at the loop's start) ``turns`` times around ``loop``.

    With ``polish`` both the seed and the returning solution get one more
    Newton step before they are compared, so the defects measure a change of
    branch rather than how far below ``tol`` each solve happened to stop.
    """
    d = seed.digits
    pts = loop.points(d)
    path = pts[1:] * turns
    records = [log_record(0, seed)]
    sols = continue_path(params, path, seed, tol, max_halvings, n, max_iter, records=records)
    a, z = seed, sols[-1]
    if polish:
        a, z = newton_step(params, a, n), newton_step(params, z, n)
    with working_precision(d):
        scale = xf.norm_sobolev(a.u, 0)
        du = xf.norm_sobolev(z.u - a.u, 0) / (scale if scale != 0 else 1)
        dc = abs(z.c - a.c)
    every = max(1, loop.steps // n_instances)
    inst = [seed] + [sols[j - 1] for j in range(every, loop.steps, every)][:n_instances - 1]
    return MonodromyResult(du, dc, inst, sols, records, loop)


# ---------------------------------------------------------------------------
# output


def write_log(records: Sequence[dict], path) -> Path:
    keys = ("step", "eps_re", "eps_im", "c_re", "c_im", "defect", "iterations")
    path = Path(path)
    lines = [" ".join(keys)]
    for r in records:
        lines.append(" ".join(repr(r[k]) if isinstance(r[k], float) else str(r[k]) for k in keys))
    path.write_text("\n".join(lines) + "\n")
    return path


def dump_instance(sol: TorusSolution, out_dir, tag: str, samples: int = 256) -> list[Path]:
    """PeriodicFunction file plus ``theta re im`` samples of ``u`` on ``[0, 1)``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pf = out / f"{tag}.pf"
    pf.write_text(xf.dumps(sol.u))
    vals = xf.modes_to_grid(sol.u.resize(max(sol.u.M, 0)).coeffs, xf.grid_size(sol.u.M, samples))
    m = len(vals)
    dat = out / f"{tag}.dat"
    dat.write_text("# theta Re(u) Im(u)\n" + "".join(
        f"{j / m:.17g} {complex(v).real:.17g} {complex(v).imag:.17g}\n" for j, v in enumerate(vals)))
    return [pf, dat]
