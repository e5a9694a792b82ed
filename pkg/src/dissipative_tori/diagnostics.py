"""Growth of Lindstedt coefficients and Gevrey-exponent fits.

For each order ``k`` we record ``(1/k) log ||u_k||`` in either the analytic
strip norm or a Sobolev norm, then fit ``log a + c log(k + b)``.  A slope
``c`` near one is the signature of Gevrey-1 growth ``||u_k|| ~ a^k k^k``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import gmpy2
import numpy as np
from scipy.optimize import least_squares

from . import xfourier as xf
from .lindstedt import LindstedtSeries

log = logging.getLogger(__name__)

DEFAULT_RHOS = ("0.5", "0.1", "0.01", "0.001")
DEFAULT_SOBOLEV = tuple(range(7))


@dataclass(frozen=True)
class NormKind:
    """``family`` is ``"analytic"`` (parameter rho) or ``"sobolev"`` (parameter r)."""

    family: str
    parameter: str
    variant: str = "as_printed"

    def __post_init__(self):
        if self.family not in ("analytic", "sobolev"):
            raise ValueError(f"unknown norm family {self.family!r}")
        if float(self.parameter) < 0:
            raise ValueError("norm parameter must be non-negative")

    @classmethod
    def analytic(cls, rho, variant: str = "as_printed") -> "NormKind":
        return cls("analytic", str(rho), variant)

    @classmethod
    def sobolev(cls, r) -> "NormKind":
        return cls("sobolev", str(r))

    def label(self) -> str:
        if self.family == "analytic":
            tag = "" if self.variant == "as_printed" else f"_{self.variant}"
            return f"A_rho={self.parameter}{tag}"
        return f"H_r={self.parameter}"

    def norm(self, f: xf.PeriodicFunction):
        with xf.working_precision(f.digits):
            p = gmpy2.mpfr(self.parameter)
            if self.family == "analytic":
                return xf.norm_rho(f, p, self.variant)
            return xf.norm_sobolev(f, p)


@dataclass(frozen=True)
class NormSequence:
    kind: NormKind
    k: np.ndarray
    value: np.ndarray
    k_range: tuple
    excluded: tuple = ()

    def window(self, k_min: int, k_max: int) -> tuple[np.ndarray, np.ndarray]:
        sel = (self.k >= k_min) & (self.k <= k_max)
        return self.k[sel], self.value[sel]


@dataclass(frozen=True)
class GevreyFit:
    a: float
    b: float
    c: float
    residual: float
    k_window: tuple
    converged: bool = True
    iterations: int = 0

    def model(self, k):
        return math.log(self.a) + self.c * np.log(np.asarray(k, dtype=float) + self.b)


class FitNonConvergence(RuntimeError):
    def __init__(self, message, best: GevreyFit):
        super().__init__(message)
        self.best = best


def norm_sequence(series: LindstedtSeries, kind: NormKind, k_range: Sequence[int] | None = None) -> NormSequence:
    """``(1/k) log ||u_k||`` for ``k`` in ``k_range`` (inclusive, default ``1..N``)."""
    k_min, k_max = (1, series.N) if k_range is None else (int(k_range[0]), int(k_range[1]))
    if k_min < 1 or k_max > series.N or k_min > k_max:
        raise ValueError(f"k_range must lie in [1, {series.N}]")
    ks, vals, skipped = [], [], []
    with xf.working_precision(series.digits):
        for k in range(k_min, k_max + 1):
            nrm = kind.norm(series.u[k])
            if nrm == 0:
                skipped.append(k)
                continue
            ks.append(k)
            vals.append(float(gmpy2.log(nrm) / k))
    if skipped:
        log.info("%s: orders %s have zero norm and were excluded", kind.label(), skipped)
    return NormSequence(kind, np.array(ks, dtype=int), np.array(vals, dtype=float),
                        (k_min, k_max), tuple(skipped))


def _initial_guess(k: np.ndarray, v: np.ndarray) -> np.ndarray:
    top = k >= k[len(k) // 2]
    c0 = np.polyfit(np.log(k[top]), v[top], 1)[0]
    log_a0 = v[-1] - c0 * math.log(k[-1])
    return np.array([log_a0, 0.0, c0])


def fit_gevrey(seq: NormSequence, k_window: Sequence[int] | None = None, max_iter: int = 200,
               gtol: float = 1e-12) -> GevreyFit:
    """Least-squares fit of ``value(k) = log a + c log(k + b)`` over ``k_window``.

    Levenberg-Marquardt from ``c0`` = slope of the top half of the window
    against ``log k``, ``b0 = 0`` and ``a0`` through the last point.  Raises
    :class:`FitNonConvergence` carrying the best iterate if the iteration
    budget is exhausted.
    """
    if k_window is None:
        k_window = seq.k_range
    k, v = seq.window(*k_window)
    if len(k) < 10:
        raise ValueError(f"need at least 10 points in the window, have {len(k)}")
    kf = k.astype(float)
    k_lo = kf.min()

    def resid(x):
        log_a, b, c = x
        arg = kf + b
        if np.any(arg <= 0):
            # outside the model's domain; steer the step back
            return np.full_like(kf, 1e6) * (1 + k_lo + b) ** 2
        return log_a + c * np.log(arg) - v

    x0 = _initial_guess(kf, v)
    sol = least_squares(resid, x0, method="lm", gtol=gtol, xtol=1e-15, ftol=1e-15,
                        max_nfev=max_iter * (len(x0) + 1))
    log_a, b, c = sol.x
    rms = float(np.sqrt(np.mean(resid(sol.x) ** 2)))
    fit = GevreyFit(float(math.exp(log_a)), float(b), float(c), rms,
                    (int(k_window[0]), int(k_window[1])), bool(sol.success), int(sol.nfev))
    if not sol.success:
        raise FitNonConvergence(f"Gevrey fit did not converge: {sol.message}", fit)
    return fit


def default_kinds(rhos=DEFAULT_RHOS, rs=DEFAULT_SOBOLEV, variant: str = "as_printed") -> list[NormKind]:
    return [NormKind.analytic(r, variant) for r in rhos] + [NormKind.sobolev(r) for r in rs]


def write_points(seq: NormSequence, path) -> Path:
    path = Path(path)
    lines = [f"# {seq.kind.label()}  k  (1/k) log ||u_k||"]
    lines += [f"{k} {v:.17g}" for k, v in zip(seq.k, seq.value)]
    path.write_text("\n".join(lines) + "\n")
    return path


def gevrey_exponent_report(series: LindstedtSeries, kinds: Sequence[NormKind] | None = None,
                           window: Sequence[int] | None = None, points_dir=None) -> list[dict]:
    """One record ``{kind, window, a, b, c, residual, sigma, R, points_file}`` per norm kind.

    ``sigma`` and ``R`` are the Gevrey index and radius read off the fit
    (``c`` and ``a`` respectively).  The default window is ``[N/4, N]``.
    """
    if kinds is None:
        kinds = default_kinds()
    if window is None:
        window = (max(1, series.N // 4), series.N)
    out = []
    for kind in kinds:
        seq = norm_sequence(series, kind)
        points_file = None
        if points_dir is not None:
            name = kind.label().replace("=", "_") + ".dat"
            points_file = str(write_points(seq, Path(points_dir) / name))
        rec = {"kind": kind.label(), "family": kind.family, "parameter": kind.parameter,
               "variant": kind.variant, "window": list(window)}
        try:
            fit = fit_gevrey(seq, window)
        except FitNonConvergence as err:
            fit = err.best
            rec["warning"] = str(err)
        except ValueError as err:
            rec.update(error=str(err), points_file=points_file)
            out.append(rec)
            continue
        rec.update(a=fit.a, b=fit.b, c=fit.c, residual=fit.residual, converged=fit.converged,
                   sigma=fit.c, R=fit.a, points_file=points_file)
        out.append(rec)
    return out


def report_json(records: list[dict], **extra) -> str:
    return json.dumps({"fits": records, **extra}, indent=2, sort_keys=True)
