import math

import numba
import pytest

from tamedem.problems import SdeProblem


@numba.njit
def zero(x):
    return 0.0


@numba.njit
def one(x):
    return 1.0


@numba.njit
def ou_drift(x):
    return -x


def make_problem(name, drift, diffusion, xi=(), x0=0.0, **kw):
    base = dict(l=1.0, m=0.0, alpha=0.5, p0=4.0, gamma=0.0, eta=1.0, mu=0.5, nu=1.0)
    base.update(kw)
    return SdeProblem(name=name, drift=drift, diffusion=diffusion, xi=xi, x0=x0, **base)


@pytest.fixture
def still_problem():
    """b = sigma = 0: every path stays at x0."""
    return make_problem("still", zero, zero, x0=0.3)


@pytest.fixture
def brownian_problem():
    """b = 0, sigma = 1, one discontinuity far away."""
    return make_problem("bm", zero, one, xi=(1e6,))


@pytest.fixture
def ou_problem():
    return make_problem("ou", ou_drift, one, xi=(0.0,), x0=1.0)


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), math.ulp(1.0))


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
