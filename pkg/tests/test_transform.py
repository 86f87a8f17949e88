import math

import numba

import numpy as np
import pytest
from scipy import integrate

from tamedem.analysis.transform import (
    PositivityError,
    SignSearchError,
    build_transform,
    verify_transform,
)
from tamedem.problems import get_problem

from conftest import make_problem, one


@pytest.fixture(scope="module")
def ex3():
    p = get_problem("ex3")
    return p, build_transform(p)


def test_anchors_and_branches(ex3):
    p, art = ex3
    assert art.xi0 == -2.0 and art.xi_k1 == 3.0
    assert not art.pb1_holds and not art.pb2_holds
    assert art.K_const > art.K_lower_bound > 0
    assert art.l_psi < 0 and art.L_psi_used == pytest.approx(art.l_psi / art.H_bound)
    # interior Psi is the chord from b(-2) = 6 to b(3) = -23
    assert art.l_psi == pytest.approx(-29 / 5, rel=1e-9)


def test_report_passes(ex3):
    p, art = ex3
    r = verify_transform(art, p.xi)
    assert r["all_pass"], r
    assert r["min_phi_prime"] >= 1


def nested_phi_prime(p, art, x):
    """phi'(x) on [xi0, x_{k+1}] by nested adaptive quadrature, independent of the ODE route."""
    b, s = p.drift, p.diffusion
    a, c = art.xi0, art.xi_k1
    b0, b1 = b(a), b(c)
    R = lambda y: b0 + (y - a) * (b1 - b0) / (c - a)
    brk = [v for v in (0.0, 2.0) if a < v < c]

    def I(y):
        pts = [v for v in brk if a < v < y]
        return integrate.quad(lambda u: 2 * b(u) / s(u) ** 2, a, y, points=pts or None, epsabs=1e-13, epsrel=1e-13)[0]

    pts = [v for v in brk if a < v < x]
    J = integrate.quad(lambda y: math.exp(I(y)) * 2 * R(y) / s(y) ** 2, a, x, points=pts or None, epsrel=1e-11)[0]
    return math.exp(-I(x)) * (J + art.K_const)


@pytest.mark.parametrize("x", [-1.5, -0.3, 0.7, 1.9, 2.6])
def test_phi_prime_against_nested_quadrature(ex3, x):
    p, art = ex3
    assert float(art.phi_prime(x)) == pytest.approx(nested_phi_prime(p, art, x), rel=1e-7)


def test_phi_second_against_finite_difference(ex3):
    p, art = ex3
    x = art.grid
    far = np.min(np.abs(x[:, None] - np.array([-2.0, 0.0, 2.0, 3.0])), axis=1) > 0.05
    fd = np.gradient(art.dphi_grid, x)
    err = np.abs(fd - art.d2phi_grid) / (1 + np.abs(art.d2phi_grid))
    assert err[far].max() < 2e-2


def test_affine_outside(ex3):
    p, art = ex3
    left = art.grid[art.piece == -1]
    assert np.ptp(art.dphi_grid[art.piece == -1]) == 0.0
    np.testing.assert_allclose(art.phi(left), art.phi_grid[art.piece == -1], rtol=1e-12)


def test_outward_drift_relaxes_to_unit_slope():
    @numba.njit
    def outward(x):
        if x >= 0.0:
            return 1.0 + 0.5 * x / (1.0 + x * x)
        return -1.0

    p = make_problem("outward", outward, one, xi=(0.0,))
    art = build_transform(p, grid_resolution=2048, span=4.0)
    assert art.pb1_holds and art.pb2_holds
    assert art.xi0 == -1.0 and art.xi_k1 == 1.0
    # phi' moves monotonically towards 1 away from the anchors
    right = art.dphi_grid[art.piece == 1]
    left = art.dphi_grid[art.piece == -1]
    assert np.all(np.diff(np.abs(right - 1)) <= 1e-12) and np.all(np.diff(np.abs(left - 1)) >= -1e-12)
    assert np.all(art.psi_grid[art.piece == 1] == art.b_grid[art.piece == 1])
    r = verify_transform(art, p.xi)
    assert r["pass"]["identity_residual"] and r["pass"]["junction_continuity"] and r["pass"]["phi_prime_ge_1"]


def test_positivity_error():
    @numba.njit
    def vanishing(x):
        return abs(x)

    p = make_problem("deg", get_problem("ex3").drift, vanishing, xi=(0.0, 2.0), nu=1.0, mu=1.0)
    with pytest.raises(PositivityError):
        build_transform(p)


def test_sign_search_error():
    # b < 0 only on (0.2, 0.4): never seen at unit offsets from xi_k
    @numba.njit
    def dip(x):
        if 0.2 < x < 0.4:
            return -1.0
        return 1.0 if x >= 0 else -1.0

    p = make_problem("dip", dip, one, xi=(0.0,))
    with pytest.raises(SignSearchError):
        build_transform(p, window=5.0)
