import math

import gmpy2
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given, strategies as st

from dissipative_tori import lindstedt as L
from dissipative_tori import xfourier as xf
from dissipative_tori.xfourier import PeriodicFunction as PF

D = 60
P = L.MapParams.standard(D)


@pytest.fixture(scope="module")
def series20():
    return L.compute_series(P, 20)


def tol(d=D, slack=10):
    return mpfr(10) ** (-(d - slack))


def test_params_validation():
    with pytest.raises(ValueError):
        L.MapParams(P.omega, ((1, 1, 0),), conformal_exponent=0)
    with pytest.raises(ValueError):
        L.MapParams(P.omega, ((1, 1, 0),), offset="0.1")
    assert P.is_real and P.max_harmonic == 1


def test_order_zero():
    s = L.compute_series(P, 0)
    assert s.u[0].M == 0 and s.u[0][0] == 0 and s.c[0] == 0


def test_order_three_drift():
    s = L.compute_series(P, 3)
    with xf.working_precision(D):
        golden = (1 + gmpy2.sqrt(mpfr(5))) / 2
        assert s.c[0] == s.c[1] == s.c[2] == 0
        assert abs(s.c[3] - golden) < tol()


def test_order_one_by_hand():
    s = L.compute_series(P, 1)
    u1 = s.u[1]
    with xf.working_precision(D):
        pi = gmpy2.const_pi()
        div = 2 * (gmpy2.cos(2 * pi * P.omega.omega) - 1)
        for ell, sign in ((1, 1), (-1, -1)):
            expect = (-sign / (4 * pi * 1j)) / div
            assert abs(u1[ell] - expect) < tol()
        assert all(abs(u1[ell]) < tol() for ell in range(-u1.M, u1.M + 1) if abs(ell) != 1)


def test_series_invariants(series20):
    s = series20
    assert all(s.u[0].coeffs == 0)
    with xf.working_precision(D):
        assert all(xf.mean(u) == 0 for u in s.u)
        for k in range(1, 21):
            assert s.u[k].is_hermitian()
            assert abs(s.c[k].imag) < tol()


def test_recursion_residual(series20):
    s = series20
    S = L.source_terms(s)
    w = P.omega
    with xf.working_precision(D):
        for k in range(4, 21):
            rhs = S[k] - s.u[k - 3] + xf.shift(s.u[k - 3], -w.omega) + s.c[k]
            r = xf.apply_Lomega(s.u[k], w) - rhs
            assert xf.norm_sobolev(r, 0) < tol() * max(1, xf.norm_sobolev(rhs, 0))
            assert abs(s.c[k] + xf.mean(S[k])) < tol()


def test_evaluate_examples(series20):
    u, c = L.evaluate(series20, 0)
    assert c == 0 and all(v == 0 for v in u.coeffs)
    with xf.working_precision(D):
        e = mpfr("0.37")
        _, c3 = L.evaluate(series20, e, upTo=3)
        assert abs(c3 - P.omega.omega * e ** 3) < tol()


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_evaluate_matches_naive_sum(series20, re_, im_):
    s = series20
    with xf.working_precision(D):
        e = mpc(mpfr(re_), mpfr(im_))
        u, c = L.evaluate(s, e)
        acc = PF.zeros(0, D)
        cacc = mpc(0)
        for k in range(s.N + 1):
            acc = acc + s.u[k] * e ** k
            cacc = cacc + s.c[k] * e ** k
        scale = max(1, xf.norm_sobolev(acc, 0))
        assert xf.max_abs_difference(u, acc) < tol() * scale
        assert abs(c - cacc) < tol() * max(1, abs(cacc))


def test_defect_trivial():
    assert L.defect(P, PF.zeros(1, D), 0, 0) == 0


@pytest.mark.parametrize("N", [4, 7])
def test_defect_slope(N):
    s = L.compute_series(P, N)
    xs, ys = [], []
    for e in ("1e-3", "2e-3", "5e-3", "1e-2"):
        with xf.working_precision(D):
            eps = mpfr(e)
        u, c = L.evaluate(s, eps)
        xs.append(math.log(float(e)))
        ys.append(math.log(float(L.defect(P, u, c, eps))))
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sum((x - mx) ** 2 for x in xs)
    assert abs(slope - (N + 1)) < 0.1


def test_defect_sees_drift_corruption(series20):
    with xf.working_precision(D):
        e = mpfr("0.01")
        u, c = L.evaluate(series20, e)
        base = L.defect(P, u, c, e)
        bad = L.defect(P, u, c + mpfr("1e-3"), e)
        assert bad >= mpfr("1e-3") - base


def test_defect_grid_too_small(series20):
    u, c = L.evaluate(series20, mpfr("0.01"))
    with pytest.raises(ValueError):
        L.invariance_error(P, u, c, mpfr("0.01"), n=8)


def test_embedding_examples(series20):
    _, K2 = L.embedding(PF.zeros(2, D), P.omega)
    assert all(K2.coeffs[i] == 0 for i in range(K2.coeffs.shape[0]) if i != K2.M)
    assert K2[0] == P.omega.omega
    u, _ = L.evaluate(series20, mpfr("0.05"))
    _, K2 = L.embedding(u, P.omega)
    with xf.working_precision(D):
        assert abs(xf.mean(K2) - P.omega.omega) < tol()


def test_map_iteration_matches_defect(series20):
    with xf.working_precision(D):
        eps = mpfr("0.1")
        u, c = L.evaluate(series20, eps)
        d = L.defect(P, u, c, eps)
        # second component of f(K) - K(. + omega) is exactly -E; the first
        # picks up the same error through x' = x + y'
        for sign in (1, -1):
            err = L.conjugacy_error(P, u, c, eps, forcing_sign=sign)
            assert d / 2 < err < 4 * d


def test_conjugacy_needs_odd_potential_for_half_shift():
    even = L.MapParams(P.omega, ((2, "0.1", 0),))
    s = L.compute_series(even, 4)
    u, c = L.evaluate(s, mpfr("0.01"))
    with pytest.raises(ValueError):
        L.conjugacy_error(even, u, c, mpfr("0.01"), forcing_sign=1)
    assert L.conjugacy_error(even, u, c, mpfr("0.01")) < mpfr("1e-9")


def test_symplectic_zero_average_check():
    params = L.MapParams.standard(100)
    vals = L.symplectic_zero_average_check(params, 50, with_norms=True)
    assert vals[0][0] == 0
    for mean_abs, norm in vals:
        assert mean_abs < mpfr("1e-85") * max(1, norm)


def test_zero_average_negative_control():
    params = L.MapParams(P.omega, P.harmonics, offset="1e-3", strict=False)
    vals = L.symplectic_zero_average_check(params, 5)
    assert vals[0] == 0
    assert vals[1] > mpfr("1e-4")
    with pytest.raises(xf.NonZeroAverage):
        L.compute_series(params, 3)


def test_multi_harmonic_potential():
    params = L.MapParams(P.omega, ((1, "0.15", "0.02"), (3, "0.01", 0)))
    s = L.compute_series(params, 8)
    with xf.working_precision(D):
        e = mpfr("1e-3")
        u, c = L.evaluate(s, e)
        assert L.defect(params, u, c, e) < e ** 9 * 100


def test_truncation_schedule():
    sch = L.TruncationSchedule(M0=4, delta=1, M_cap=6)
    assert [sch.M(k) for k in (0, 1, 5)] == [4, 5, 6]
    s = L.compute_series(P, 10, schedule=sch)
    assert max(f.M for f in s.u) <= 6
    with pytest.raises(ValueError):
        L.TruncationSchedule(M0=0)


def test_save_load_round_trip(tmp_path, series20):
    path = L.save_series(series20, tmp_path / "s.ls")
    t = L.load_series(path)
    assert t.N == 20 and t.digits == D and t.params.conformal_exponent == 3
    ulp = mpfr(2) ** (-xf.digits_to_bits(D))
    with xf.working_precision(D):
        for a, b in zip(series20.u, t.u):
            for x, y in zip(a.coeffs, b.coeffs):
                assert abs(x - y) <= 2 * ulp * max(abs(x), 1)
        assert all(abs(x - y) <= 2 * ulp * max(abs(x), 1) for x, y in zip(series20.c, t.c))
        assert t.params.omega.omega == series20.params.omega.omega


def test_load_errors(tmp_path, series20):
    path = L.save_series(series20, tmp_path / "s.ls")
    with pytest.raises(xf.PrecisionMismatch):
        L.load_series(path, digits=D + 1)
    bad = tmp_path / "bad.ls"
    bad.write_text(path.read_text().replace("#ls v1", "#ls v2", 1))
    with pytest.raises(xf.FormatError):
        L.load_series(bad)
