"""Extended-precision trigonometric polynomials on the circle.

A :class:`PeriodicFunction` stores the Fourier coefficients ``f_l`` of

    f(theta) = sum_{|l| <= M} f_l exp(2 pi i l theta)

as a numpy object array of ``gmpy2.mpc`` values, index ``l + M``.  All
arithmetic is carried out under a gmpy2 context whose precision is derived
from the decimal digit count ``digits`` attached to every value.

Besides the algebra (shift, derivative, product, evaluation) the module
provides the three constant-coefficient difference equations that appear
when solving invariance equations over the rotation ``theta -> theta + omega``:

* ``L_omega phi = phi(.+w) - 2 phi + phi(.-w)``
* ``D_minus w = w(.-w) - w``
* ``D_plus^b phi = phi(.+w) - b phi``

Each is diagonal in Fourier space and is solved mode by mode.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

FORMAT_VERSION = "v1"
NORM_RHO_VARIANTS = ("as_printed", "l2", "ell1", "sup")


class PrecisionMismatch(ValueError):
    """Operands carry different working precisions."""


class NonZeroAverage(ArithmeticError):
    """Right-hand side of a cohomology equation has a non-negligible mean."""


class DivisorUnderflow(ArithmeticError):
    """A Fourier divisor fell below the configured floor."""

    def __init__(self, message, ell=None, divisor=None):
        super().__init__(message)
        self.ell = ell
        self.divisor = divisor


class FormatError(ValueError):
    """Malformed or wrong-version text serialization."""


# ---------------------------------------------------------------------------
# precision handling


def digits_to_bits(digits: int) -> int:
    return int(math.ceil(digits * math.log2(10))) + 8


def bits_to_digits(bits: int) -> int:
    """Inverse of :func:`digits_to_bits`."""
    return int((bits - 8) / math.log2(10))


@contextmanager
def working_precision(digits: int):
    """Run the enclosed block with a gmpy2 context at ``digits`` decimal digits.

    Overflow, NaN production and division by zero raise instead of
    propagating silently.
    """
    if digits < 15:
        raise ValueError("digits must be at least 15")
    ctx = gmpy2.context(
        gmpy2.get_context(),
        precision=digits_to_bits(digits),
        real_prec=gmpy2.Default,
        imag_prec=gmpy2.Default,
        trap_overflow=True,
        trap_invalid=True,
        trap_divzero=True,
    )
    with ctx:
        yield


def xscalar(value, digits: int) -> mpc:
    """Convert a number or decimal string to an ``mpc`` at ``digits`` precision."""
    with working_precision(digits):
        if isinstance(value, str):
            s = value.strip().replace(" ", "")
            try:
                return mpc(mpfr(s))
            except ValueError:
                return mpc(s)
        if isinstance(value, tuple):
            return mpc(_to_mpfr(value[0]), _to_mpfr(value[1]))
        return mpc(value)


def xreal(value, digits: int) -> mpfr:
    with working_precision(digits):
        return _to_mpfr(value)


def _to_mpfr(value):
    if isinstance(value, str):
        return mpfr(value.strip())
    if isinstance(value, gmpy2.mpc):
        return value.real
    return mpfr(value)


def pi(digits: int) -> mpfr:
    with working_precision(digits):
        return gmpy2.const_pi()


def decimal_string(x, digits: int | None = None) -> str:
    """Full precision decimal representation of an ``mpfr``.

    The default digit count is enough for a correctly rounded round trip.
    """
    x = mpfr(x) if not isinstance(x, gmpy2.mpfr) else x
    if digits is None:
        digits = int(math.ceil(x.precision * math.log10(2))) + 2
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    if set(mant) <= {"0"}:
        return "0"
    return f"{sign}{mant[0]}.{mant[1:]}e{exp - 1}"


def _real_array(values):
    return np.array([v.real for v in values], dtype=object)


# ---------------------------------------------------------------------------
# frequency


@dataclass(frozen=True)
class Frequency:
    """Rotation number together with its Diophantine constants.

    ``nu`` and ``tau`` are bookkeeping for divisor-size diagnostics,
    ``|omega q - p| >= nu |q|^-tau``.
    """

    omega: mpfr
    digits: int
    nu: float = 0.381966
    tau: float = 1.0

    def __post_init__(self):
        if self.nu <= 0 or self.tau < 1:
            raise ValueError("Diophantine constants need nu > 0 and tau >= 1")

    @classmethod
    def golden_mean(cls, digits: int) -> "Frequency":
        """(1 + sqrt 5)/2 from a correctly rounded square root.

        For the golden mean ``q |q omega - p| >= 2 - omega`` for every q >= 1.
        """
        with working_precision(digits):
            omega = (1 + gmpy2.sqrt(mpfr(5))) / 2
            nu = float(2 - omega)
        return cls(omega, digits, nu=nu, tau=1.0)

    @classmethod
    def from_string(cls, value: str, digits: int, nu: float = 0.381966,
                    tau: float = 1.0) -> "Frequency":
        return cls(xreal(value, digits), digits, nu=nu, tau=tau)

    def min_divisor_bound(self, M: int) -> float:
        """Diophantine lower bound for ``|exp(2 pi i l omega) - 1|`` over ``0 < |l| <= M``."""
        return 4 * self.nu * M ** (-self.tau)


@lru_cache(maxsize=64)
def _phases(omega: mpfr, M: int, bits: int):
    # exp(2 pi i l omega) for l = -M..M
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        two_pi_i = mpc(0, 2 * gmpy2.const_pi())
        z = gmpy2.exp(two_pi_i * omega)
        out = [mpc(1)] * (2 * M + 1)
        p = mpc(1)
        for ell in range(1, M + 1):
            p = p * z if ell % 64 else gmpy2.exp(two_pi_i * omega * ell)
            out[M + ell] = p
            out[M - ell] = p.conjugate()
    arr = np.array(out, dtype=object)
    arr.flags.writeable = False
    return arr


def rotation_phases(omega: Frequency | mpfr, M: int, digits: int) -> np.ndarray:
    """``exp(2 pi i l a)`` for ``l = -M..M``."""
    a = omega.omega if isinstance(omega, Frequency) else omega
    with working_precision(digits):
        a = mpfr(a) if not isinstance(a, gmpy2.mpfr) else a
        return _phases(a, M, gmpy2.get_context().precision)


# ---------------------------------------------------------------------------
# FFT on object arrays


@lru_cache(maxsize=128)
def _twiddles(s: int, sign: int, bits: int):
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        ipi = mpc(0, sign * gmpy2.const_pi())
        tw = np.array([gmpy2.exp(ipi * j / s) for j in range(s)], dtype=object)
    tw = tw[:, None]
    tw.flags.writeable = False
    return tw


def _fft_unnormalized(x: np.ndarray, sign: int) -> np.ndarray:
    """sum_j x_j exp(sign 2 pi i j k / n) for power-of-two n.

    Iterative radix-2 with the butterflies at each stage vectorized over
    the whole array.
    """
    n = x.shape[0]
    if n & (n - 1):
        raise ValueError(f"grid size {n} is not a power of two")
    bits = max(gmpy2.get_context().precision, _array_bits(x))
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        X = x.reshape(1, n)
        while X.shape[0] < n:
            s = X.shape[0]
            h = X.shape[1] // 2
            even = X[:, :h]
            odd = X[:, h:] * _twiddles(s, sign, bits)
            X = np.vstack([even + odd, even - odd])
        return X.ravel()


def _array_bits(x: np.ndarray) -> int:
    # precision carried by the entries, so transforms never silently drop to 53 bits
    bits = 0
    for v in x.flat:
        if isinstance(v, gmpy2.mpc):
            bits = max(bits, *v.precision)
        elif isinstance(v, gmpy2.mpfr):
            bits = max(bits, v.precision)
    return bits


def grid_size(bandwidth: int, minimum: int = 1) -> int:
    """Smallest power of two ``n >= max(2 * bandwidth + 1, minimum)``."""
    n = 1
    while n < max(2 * bandwidth + 1, minimum):
        n *= 2
    return n


def grid_points(n: int, digits: int) -> np.ndarray:
    with working_precision(digits):
        return np.array([mpfr(j) / n for j in range(n)], dtype=object)


def modes_to_grid(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Values at ``theta_j = j/n`` of the trigonometric polynomial ``coeffs``."""
    M = (len(coeffs) - 1) // 2
    if n < 2 * M + 1:
        raise ValueError(f"grid of {n} points cannot hold {2 * M + 1} modes")
    buf = np.full(n, mpc(0), dtype=object)
    buf[:M + 1] = coeffs[M:]
    if M:
        buf[n - M:] = coeffs[:M]
    return _fft_unnormalized(buf, +1)


def grid_to_modes(values: np.ndarray, M: int) -> np.ndarray:
    """Fourier coefficients ``l = -M..M`` of grid samples (the discrete transform)."""
    n = values.shape[0]
    if n < 2 * M + 1:
        raise ValueError(f"grid of {n} points cannot resolve {2 * M + 1} modes")
    values = np.asarray(values, dtype=object)
    bits = max(gmpy2.get_context().precision, _array_bits(values))
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        y = _fft_unnormalized(values, -1) / n
    return np.concatenate([y[n - M:], y[:M + 1]]) if M else y[:1].copy()


# ---------------------------------------------------------------------------
# periodic functions


@dataclass(frozen=True, eq=False)
class PeriodicFunction:
    """Immutable trigonometric polynomial with ``mpc`` coefficients."""

    coeffs: np.ndarray
    digits: int

    def __post_init__(self):
        c = self.coeffs
        if c.ndim != 1 or len(c) % 2 == 0:
            raise ValueError("coefficient array must have odd length 2M+1")
        if c.flags.writeable:
            c = c.copy()
            c.flags.writeable = False
            object.__setattr__(self, "coeffs", c)

    # constructors ---------------------------------------------------------

    @classmethod
    def zeros(cls, M: int, digits: int) -> "PeriodicFunction":
        with working_precision(digits):
            return cls(np.full(2 * M + 1, mpc(0), dtype=object), digits)

    @classmethod
    def constant(cls, value, digits: int, M: int = 0) -> "PeriodicFunction":
        with working_precision(digits):
            c = np.full(2 * M + 1, mpc(0), dtype=object)
            c[M] = xscalar(value, digits)
            return cls(c, digits)

    @classmethod
    def from_modes(cls, modes: Mapping[int, object], digits: int,
                   M: int | None = None) -> "PeriodicFunction":
        if M is None:
            M = max((abs(ell) for ell in modes), default=0)
        with working_precision(digits):
            c = np.full(2 * M + 1, mpc(0), dtype=object)
            for ell, v in modes.items():
                if abs(ell) > M:
                    raise ValueError(f"mode {ell} outside [-{M}, {M}]")
                c[M + ell] = xscalar(v, digits)
            return cls(c, digits)

    @classmethod
    def from_grid(cls, values: Sequence, digits: int, M: int | None = None) -> "PeriodicFunction":
        """Interpolating trigonometric polynomial of samples on ``theta_j = j/n``."""
        values = np.asarray(values, dtype=object)
        n = values.shape[0]
        if M is None:
            M = (n - 1) // 2
        with working_precision(digits):
            vals = np.array([xscalar(v, digits) if not isinstance(v, (gmpy2.mpc, gmpy2.mpfr)) else v
                             for v in values], dtype=object)
            return cls(grid_to_modes(vals, M), digits)

    @classmethod
    def sin(cls, digits: int, harmonic: int = 1, amplitude=1) -> "PeriodicFunction":
        """``amplitude * sin(2 pi h theta)``."""
        with working_precision(digits):
            a = xscalar(amplitude, digits)
            half = a / mpc(0, 2)
            return cls.from_modes({harmonic: half, -harmonic: -half}, digits)

    @classmethod
    def cos(cls, digits: int, harmonic: int = 1, amplitude=1) -> "PeriodicFunction":
        with working_precision(digits):
            half = xscalar(amplitude, digits) / 2
            if harmonic == 0:
                return cls.constant(2 * half, digits)
            return cls.from_modes({harmonic: half, -harmonic: half}, digits)

    # accessors ------------------------------------------------------------

    @property
    def M(self) -> int:
        return (len(self.coeffs) - 1) // 2

    def __getitem__(self, ell: int):
        if abs(ell) > self.M:
            return mpc(0)
        return self.coeffs[self.M + ell]

    def modes(self) -> Iterable[tuple[int, mpc]]:
        M = self.M
        return ((ell, self.coeffs[M + ell]) for ell in range(-M, M + 1))

    def resize(self, M: int) -> "PeriodicFunction":
        """Zero-pad or truncate to ``|l| <= M``."""
        if M == self.M:
            return self
        with working_precision(self.digits):
            c = np.full(2 * M + 1, mpc(0), dtype=object)
            k = min(M, self.M)
            c[M - k:M + k + 1] = self.coeffs[self.M - k:self.M + k + 1]
            return PeriodicFunction(c, self.digits)

    def to_grid(self, n: int) -> np.ndarray:
        with working_precision(self.digits):
            return modes_to_grid(self.coeffs, n)

    def bandwidth(self, rel_tol=None) -> int:
        """Largest ``|l|`` whose coefficient exceeds ``rel_tol`` times the largest one."""
        with working_precision(self.digits):
            mags = [abs(z) for z in self.coeffs]
            top = max(mags)
            if top == 0:
                return 0
            tol = top * (rel_tol if rel_tol is not None else mpfr(10) ** (-(self.digits - 5)))
            M = self.M
            return max(abs(i - M) for i, m in enumerate(mags) if m > tol)

    def is_hermitian(self, rel_tol=None) -> bool:
        """True when the represented function is real on the real axis."""
        with working_precision(self.digits):
            scale = max([abs(z) for z in self.coeffs] + [mpfr(1)])
            tol = scale * (rel_tol if rel_tol is not None else mpfr(10) ** (-(self.digits - 8)))
            c = self.coeffs
            return all(abs(c[i] - c[-1 - i].conjugate()) <= tol for i in range(self.M + 1))

    def conj(self) -> "PeriodicFunction":
        """Coefficients of ``conj(f(conj theta))``, i.e. conjugated coefficients."""
        with working_precision(self.digits):
            return PeriodicFunction(np.array([z.conjugate() for z in self.coeffs], dtype=object),
                                    self.digits)

    # algebra --------------------------------------------------------------

    def _binary(self, other, op):
        if isinstance(other, PeriodicFunction):
            _check_precision(self, other)
            M = max(self.M, other.M)
            a, b = self.resize(M), other.resize(M)
            with working_precision(self.digits):
                return PeriodicFunction(op(a.coeffs, b.coeffs), self.digits)
        with working_precision(self.digits):
            c = self.coeffs.copy()
            c[self.M] = op(c[self.M], xscalar(other, self.digits))
            return PeriodicFunction(c, self.digits)

    def __add__(self, other):
        return self._binary(other, lambda x, y: x + y)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda x, y: x - y)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        with working_precision(self.digits):
            return PeriodicFunction(-self.coeffs, self.digits)

    def __mul__(self, scalar):
        if isinstance(scalar, PeriodicFunction):
            return multiply(self, scalar)
        with working_precision(self.digits):
            return PeriodicFunction(self.coeffs * xscalar(scalar, self.digits), self.digits)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        with working_precision(self.digits):
            return PeriodicFunction(self.coeffs / xscalar(scalar, self.digits), self.digits)

    def __call__(self, theta):
        return evaluate(self, theta)

    def __repr__(self):
        return f"PeriodicFunction(M={self.M}, digits={self.digits})"


def _check_precision(*fs: PeriodicFunction):
    d = {f.digits for f in fs}
    if len(d) > 1:
        raise PrecisionMismatch(f"operands have different precisions {sorted(d)}")


def max_abs_difference(f: PeriodicFunction, g: PeriodicFunction) -> mpfr:
    """``max_l |f_l - g_l|``."""
    with working_precision(f.digits):
        return max(abs(z) for z in (f - g).coeffs)


# ---------------------------------------------------------------------------
# operations


def shift(f: PeriodicFunction, a) -> PeriodicFunction:
    """``theta -> f(theta + a)`` for real ``a``; exact on the retained modes."""
    with working_precision(f.digits):
        if isinstance(a, Frequency):
            a = a.omega
        a = _to_mpfr(a) if not isinstance(a, gmpy2.mpfr) else a
        ph = _phases(a, f.M, gmpy2.get_context().precision)
        return PeriodicFunction(f.coeffs * ph, f.digits)


def derivative(f: PeriodicFunction) -> PeriodicFunction:
    with working_precision(f.digits):
        two_pi_i = mpc(0, 2 * gmpy2.const_pi())
        ell = np.arange(-f.M, f.M + 1)
        return PeriodicFunction(np.array([c * (two_pi_i * int(l)) for c, l in zip(f.coeffs, ell)],
                                         dtype=object), f.digits)


def multiply(f: PeriodicFunction, g: PeriodicFunction, M_cap: int | None = None) -> PeriodicFunction:
    """Pointwise product, exact up to truncation at ``min(M_f + M_g, M_cap)``.

    Computed on a grid of at least ``2 (M_f + M_g) + 1`` points so that no
    aliasing enters the retained modes.
    """
    _check_precision(f, g)
    M = f.M + g.M
    n = grid_size(M)
    with working_precision(f.digits):
        vals = modes_to_grid(f.coeffs, n) * modes_to_grid(g.coeffs, n)
        out = grid_to_modes(vals, M)
    h = PeriodicFunction(out, f.digits)
    if M_cap is not None and M_cap < M:
        h = h.resize(M_cap)
    return h


def evaluate(f: PeriodicFunction, theta) -> mpc:
    """Sum of the Fourier series at a real or complex ``theta`` (Horner in ``exp(2 pi i theta)``)."""
    with working_precision(f.digits):
        t = xscalar(theta, f.digits) if not isinstance(theta, gmpy2.mpc) else theta
        # reduce the real part so that theta and theta + 1 share the same z
        t = t - gmpy2.floor(t.real)
        z = gmpy2.exp(mpc(0, 2 * gmpy2.const_pi()) * t)
        acc = mpc(0)
        for c in reversed(f.coeffs):
            acc = acc * z + c
        return acc / z ** f.M if f.M else acc


def evaluate_many(f: PeriodicFunction, thetas: Sequence) -> np.ndarray:
    return np.array([evaluate(f, t) for t in thetas], dtype=object)


def mean(f: PeriodicFunction) -> mpc:
    return f.coeffs[f.M]


def _zero_mean_ok(eta: PeriodicFunction, tol) -> bool:
    with working_precision(eta.digits):
        if tol is None:
            tol = mpfr(10) ** (-(eta.digits - 8))
        scale = norm_sobolev(eta, 0)
        return abs(mean(eta)) <= tol * scale


def _floor(digits, divisor_floor):
    if divisor_floor is None:
        return mpfr(10) ** (-(digits - 5))
    return mpfr(divisor_floor)


def solve_Lomega(eta: PeriodicFunction, omega: Frequency, zero_mean_tol=None,
                 divisor_floor=None) -> PeriodicFunction:
    """Zero-mean solution of ``phi(.+w) - 2 phi + phi(.-w) = eta``.

    ``phi_l = eta_l / (2 (cos(2 pi l w) - 1))`` for ``l != 0``.
    """
    if not _zero_mean_ok(eta, zero_mean_tol):
        raise NonZeroAverage(f"mean {complex(mean(eta))!r} is not negligible")
    with working_precision(eta.digits):
        ph = rotation_phases(omega, eta.M, eta.digits)
        floor = _floor(eta.digits, divisor_floor)
        M = eta.M
        out = np.full(2 * M + 1, mpc(0), dtype=object)
        for i in range(2 * M + 1):
            if i == M:
                continue
            div = 2 * (ph[i].real - 1)
            if abs(div) < floor:
                raise DivisorUnderflow(f"L_omega divisor {float(div):.3e} at l={i - M}", i - M, div)
            out[i] = eta.coeffs[i] / div
        return PeriodicFunction(out, eta.digits)


def solve_Dminus(g: PeriodicFunction, omega: Frequency, zero_mean_tol=None,
                 divisor_floor=None) -> PeriodicFunction:
    """Zero-mean solution of ``w(. - omega) - w = g``."""
    if not _zero_mean_ok(g, zero_mean_tol):
        raise NonZeroAverage(f"mean {complex(mean(g))!r} is not negligible")
    with working_precision(g.digits):
        ph = rotation_phases(omega, g.M, g.digits)
        floor = _floor(g.digits, divisor_floor)
        M = g.M
        out = np.full(2 * M + 1, mpc(0), dtype=object)
        for i in range(2 * M + 1):
            if i == M:
                continue
            div = ph[i].conjugate() - 1
            if abs(div) < floor:
                raise DivisorUnderflow(f"D_minus divisor {float(abs(div)):.3e} at l={i - M}", i - M, div)
            out[i] = g.coeffs[i] / div
        return PeriodicFunction(out, g.digits)


def solve_Dplus_b(g: PeriodicFunction, omega: Frequency, b, divisor_floor=None) -> PeriodicFunction:
    """Solution of ``phi(. + omega) - b phi = g``; the ``l = 0`` divisor is ``1 - b``."""
    with working_precision(g.digits):
        b = xscalar(b, g.digits)
        ph = rotation_phases(omega, g.M, g.digits)
        floor = _floor(g.digits, divisor_floor)
        divs = ph - b
        small = [i for i, dv in enumerate(divs) if abs(dv) < floor]
        if small:
            i = min(small, key=lambda j: abs(divs[j]))
            raise DivisorUnderflow(
                f"D_plus^b divisor {float(abs(divs[i])):.3e} at l={i - g.M}", i - g.M, divs[i])
        return PeriodicFunction(g.coeffs / divs, g.digits)


def apply_Lomega(phi: PeriodicFunction, omega: Frequency) -> PeriodicFunction:
    """``phi(. + w) - 2 phi + phi(. - w)`` by direct shifts."""
    with working_precision(phi.digits):
        return shift(phi, omega.omega) - 2 * phi + shift(phi, -omega.omega)


def apply_Dminus(w: PeriodicFunction, omega: Frequency) -> PeriodicFunction:
    with working_precision(w.digits):
        return shift(w, -omega.omega) - w


def apply_Dplus_b(phi: PeriodicFunction, omega: Frequency, b) -> PeriodicFunction:
    with working_precision(phi.digits):
        return shift(phi, omega.omega) - phi * b


# ---------------------------------------------------------------------------
# composition with sin / cos


class TrigRecurrence:
    """Online Taylor coefficients of ``sin, cos(2 pi h (theta + u(theta, eps)))``.

    Works on grid samples.  After ``push`` has received ``u_1 .. u_k`` the
    order-``k`` coefficients are available as ``S[k]`` and ``C[k]``:

        k S_k = 2 pi h sum_{m<k} (m+1) u_{m+1} C_{k-1-m}
        k C_k = -2 pi h sum_{m<k} (m+1) u_{m+1} S_{k-1-m}

    Products are formed pointwise, so the grid must resolve the bandwidth
    of every product; ``truncate`` (a callable on grid arrays) may project
    each new order back onto fewer modes.
    """

    def __init__(self, thetas: np.ndarray, digits: int, harmonic: int = 1,
                 capacity: int = 16, real: bool = False, truncate=None):
        self.digits = digits
        self.harmonic = harmonic
        self.real = real
        self.truncate = truncate
        n = thetas.shape[0]
        with working_precision(digits):
            self._k2pi = 2 * gmpy2.const_pi() * harmonic
            arg = [self._k2pi * t for t in thetas]
            self._cap = max(capacity, 1)
            self._W = np.empty((self._cap, n), dtype=object)
            self._S = np.empty((self._cap + 1, n), dtype=object)
            self._C = np.empty((self._cap + 1, n), dtype=object)
            s0 = [gmpy2.sin(a) for a in arg]
            c0 = [gmpy2.cos(a) for a in arg]
            if not real:
                s0, c0 = [mpc(v) for v in s0], [mpc(v) for v in c0]
            self._S[0] = s0
            self._C[0] = c0
        self.order = 0

    def _grow(self):
        cap = 2 * self._cap
        n = self._W.shape[1]
        W = np.empty((cap, n), dtype=object)
        S = np.empty((cap + 1, n), dtype=object)
        C = np.empty((cap + 1, n), dtype=object)
        W[:self._cap] = self._W
        S[:self._cap + 1] = self._S
        C[:self._cap + 1] = self._C
        self._W, self._S, self._C, self._cap = W, S, C, cap

    def push(self, u_k: np.ndarray):
        """Append grid samples of the next coefficient ``u_{k}`` and form order ``k``."""
        k = self.order + 1
        if k > self._cap:
            self._grow()
        with working_precision(self.digits):
            if self.real:
                u_k = np.array([v.real if isinstance(v, gmpy2.mpc) else v for v in u_k], dtype=object)
            self._W[k - 1] = u_k * k
            W = self._W[:k]
            s = (W * self._C[k - 1::-1] if k > 1 else W * self._C[:1]).sum(axis=0)
            c = (W * self._S[k - 1::-1] if k > 1 else W * self._S[:1]).sum(axis=0)
            fac = self._k2pi / k
            s, c = s * fac, c * (-fac)
            if self.truncate is not None:
                s, c = self.truncate(s), self.truncate(c)
            self._S[k] = s
            self._C[k] = c
        self.order = k

    def S(self, k: int) -> np.ndarray:
        return self._S[k]

    def C(self, k: int) -> np.ndarray:
        return self._C[k]


def trig_orders(u_coeffs: Sequence[PeriodicFunction], N: int, harmonic: int = 1,
                M_cap: int | None = None):
    """Taylor coefficients in eps of ``sin`` and ``cos`` of ``2 pi h (theta + sum_k u_k eps^k)``.

    ``u_coeffs[0]`` must vanish identically.  Returns two lists of length
    ``N + 1`` (orders ``0..N``).
    """
    if len(u_coeffs) < N + 1 and N > 0:
        raise ValueError(f"need u_0..u_{N}, got {len(u_coeffs)} coefficients")
    digits = u_coeffs[0].digits
    _check_precision(*u_coeffs[:N + 1])
    with working_precision(digits):
        if any(abs(z) != 0 for z in u_coeffs[0].coeffs):
            raise ValueError("u_0 must vanish identically")
    Mu = [f.M for f in u_coeffs[:N + 1]]
    # bandwidth bound for order j: h + max over compositions of sum of M_k
    bw = [harmonic]
    prod_bw = harmonic
    for j in range(1, N + 1):
        b = max(bw[j - 1 - m] + Mu[m + 1] for m in range(j))
        prod_bw = max(prod_bw, b)
        bw.append(b if M_cap is None else min(b, M_cap))
    n = grid_size(prod_bw)
    thetas = grid_points(n, digits)
    real = all(f.is_hermitian() for f in u_coeffs[1:N + 1])
    trunc = None
    if M_cap is not None and prod_bw > M_cap:
        def trunc(vals):
            out = modes_to_grid(grid_to_modes(vals, M_cap), n)
            return _real_array(out) if real else out
    rec = TrigRecurrence(thetas, digits, harmonic=harmonic, capacity=max(N, 1), real=real,
                         truncate=trunc)
    with working_precision(digits):
        for k in range(1, N + 1):
            g = u_coeffs[k].to_grid(n)
            rec.push(_real_array(g) if real else g)
        S = [PeriodicFunction(grid_to_modes(rec.S(k), bw[k]), digits) for k in range(N + 1)]
        C = [PeriodicFunction(grid_to_modes(rec.C(k), bw[k]), digits) for k in range(N + 1)]
    return S, C


# ---------------------------------------------------------------------------
# norms


def norm_rho(f: PeriodicFunction, rho, variant: str = "as_printed") -> mpfr:
    """Weighted Fourier norm on the strip ``|Im theta| < rho``.

    ``as_printed``: ``sum |f_l|^2 exp(2 pi |l| rho)`` (no square root)
    ``l2``:         square root of the above
    ``ell1``:       ``sum |f_l| exp(2 pi |l| rho)``
    ``sup``:        max of ``|f|`` on both boundary lines of the strip (grid sampled)
    """
    if variant not in NORM_RHO_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {NORM_RHO_VARIANTS}")
    with working_precision(f.digits):
        rho = mpfr(rho) if not isinstance(rho, str) else mpfr(rho)
        if rho < 0:
            raise ValueError("rho must be non-negative")
        M = f.M
        w = [gmpy2.exp(2 * gmpy2.const_pi() * abs(ell) * rho) for ell in range(-M, M + 1)]
        if variant == "sup":
            n = grid_size(M, 64)
            best = mpfr(0)
            for sgn in (1, -1):
                # theta = x + i sgn rho multiplies mode l by exp(-2 pi l sgn rho)
                e = [gmpy2.exp(-2 * gmpy2.const_pi() * ell * sgn * rho) for ell in range(-M, M + 1)]
                vals = modes_to_grid(f.coeffs * np.array(e, dtype=object), n)
                best = max(best, max(abs(v) for v in vals))
            return best
        if variant == "ell1":
            return gmpy2.fsum(abs(c) * wi for c, wi in zip(f.coeffs, w))
        s = gmpy2.fsum(gmpy2.norm(c) * wi for c, wi in zip(f.coeffs, w))
        return gmpy2.sqrt(s) if variant == "l2" else s


def norm_sobolev(f: PeriodicFunction, r=0) -> mpfr:
    """L2 norm of the ``r``-th derivative, ``(sum (2 pi l)^(2r) |f_l|^2)^(1/2)``."""
    with working_precision(f.digits):
        r = mpfr(r)
        if r < 0:
            raise ValueError("r must be non-negative")
        two_pi = 2 * gmpy2.const_pi()
        terms = []
        for ell, c in f.modes():
            if ell == 0:
                if r == 0:
                    terms.append(gmpy2.norm(c))
                continue
            terms.append((two_pi * abs(ell)) ** (2 * r) * gmpy2.norm(c))
        return gmpy2.sqrt(gmpy2.fsum(terms)) if terms else mpfr(0)


def norm_sup(f: PeriodicFunction, n: int | None = None) -> mpfr:
    """Max of ``|f|`` over a uniform real grid."""
    if n is None:
        n = grid_size(f.M, 64)
    with working_precision(f.digits):
        return max(abs(v) for v in modes_to_grid(f.coeffs, n))


# ---------------------------------------------------------------------------
# text format


def dump_lines(f: PeriodicFunction) -> list[str]:
    lines = [f"#pf {FORMAT_VERSION}", f"M={f.M}", f"digits={f.digits}"]
    with working_precision(f.digits):
        for ell, c in f.modes():
            lines.append(f"{ell} {decimal_string(c.real)} {decimal_string(c.imag)}")
    return lines


def parse_lines(lines: Sequence[str], start: int = 0) -> tuple[PeriodicFunction, int]:
    """Parse one ``#pf`` block beginning at ``lines[start]``; returns the function and next index."""
    i = start
    head = lines[i].strip()
    if not head.startswith("#pf"):
        raise FormatError(f"expected '#pf' header, got {head!r}")
    version = head.split()[1] if len(head.split()) > 1 else ""
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported periodic-function format version {version!r}")
    M = int(_keyval(lines[i + 1], "M"))
    digits = int(_keyval(lines[i + 2], "digits"))
    i += 3
    with working_precision(digits):
        c = np.full(2 * M + 1, mpc(0), dtype=object)
        for _ in range(2 * M + 1):
            parts = lines[i].split()
            if len(parts) != 3:
                raise FormatError(f"bad mode line {lines[i]!r}")
            ell = int(parts[0])
            if abs(ell) > M:
                raise FormatError(f"mode {ell} outside [-{M}, {M}]")
            c[M + ell] = mpc(mpfr(parts[1]), mpfr(parts[2]))
            i += 1
    return PeriodicFunction(c, digits), i


def _keyval(line: str, key: str) -> str:
    k, _, v = line.strip().partition("=")
    if k != key:
        raise FormatError(f"expected '{key}=', got {line!r}")
    return v


def dumps(f: PeriodicFunction) -> str:
    return "\n".join(dump_lines(f)) + "\n"


def loads(text: str) -> PeriodicFunction:
    f, _ = parse_lines(text.splitlines())
    return f
