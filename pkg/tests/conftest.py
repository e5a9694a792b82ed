import random

import pytest
from gmpy2 import mpc, mpfr
from hypothesis import settings

from dissipative_tori import xfourier as xf

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_pf(M, digits, seed, zero_mean=False, hermitian=False, scale=1.0):
    rng = random.Random(seed)
    with xf.working_precision(digits):
        modes = {}
        for ell in range(-M, M + 1):
            z = mpc(mpfr(rng.uniform(-scale, scale)), mpfr(rng.uniform(-scale, scale)))
            modes[ell] = z
        if hermitian:
            modes[0] = mpc(modes[0].real)
            for ell in range(1, M + 1):
                modes[-ell] = modes[ell].conjugate()
        if zero_mean:
            modes[0] = mpc(0)
        return xf.PeriodicFunction.from_modes(modes, digits, M)


@pytest.fixture
def rpf():
    return random_pf


# criterion number -> (passed, detail); filled in by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(str(k).split()[0]), str(k))):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
