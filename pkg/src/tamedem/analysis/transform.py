"""Monotone change of variable that turns a piecewise drift into a one-sided Lipschitz one.

Given the drift discontinuities ``xi_1 < ... < xi_k`` two anchors are picked:
``xi_0 < xi_1`` and ``xi_{k+1} > xi_k``.  On ``[xi_0, xi_{k+1}]``

    phi'(y) = exp(-I(y)) (J(y) + K),   I(y) = int 2b/sigma^2,
    J(y) = int exp(I) 2R/sigma^2,      R linear from b(xi_0) to b(xi_{k+1}),

with ``phi(xi_0) = b(xi_0)`` and integrals taken from ``xi_0``.  Right of
``xi_{k+1}`` phi relaxes towards slope one if ``b >= 0`` beyond ``xi_k`` and is
affine otherwise; left of ``xi_0`` likewise with ``b <= 0`` before ``xi_1``.  Then ``phi' b + phi'' sigma^2 / 2 = Psi`` away from the
discontinuities.

The integrals are solved as one ODE system per continuity segment with an
adaptive Runge-Kutta method; ``phi`` is linear in ``K``, so a single pass gives
both the lower bound on ``K`` and ``phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from ..problems import SdeProblem, evaluate


class PositivityError(ValueError):
    pass


class SignSearchError(RuntimeError):
    pass


@dataclass
class TransformArtifacts:
    problem: str
    xi0: float
    xi_k1: float
    pb1_holds: bool  # b >= 0 beyond xi_k (on the search window)
    pb2_holds: bool  # b <= 0 before xi_1 (on the search window)
    K_const: float
    K_lower_bound: float
    H_bound: float
    l_psi: float
    L_psi_used: float
    kappa: float
    grid: np.ndarray
    piece: np.ndarray  # -1 left of xi0 (inclusive), 0 inside, 1 right of xi_{k+1} (inclusive)
    phi_grid: np.ndarray
    dphi_grid: np.ndarray
    d2phi_grid: np.ndarray
    psi_grid: np.ndarray
    b_grid: np.ndarray
    sigma_grid: np.ndarray
    junctions: dict = field(default_factory=dict)
    phi: Callable = field(default=None, repr=False)
    phi_prime: Callable = field(default=None, repr=False)


def _choose_anchors(problem: SdeProblem, window: float, n: int = 5001):
    b = problem.drift
    lo, hi = problem.xi[0], problem.xi[-1]
    right = np.linspace(hi, hi + window, n)[1:]
    pb1_holds = bool(np.all(evaluate(b, right) >= 0))
    if pb1_holds:
        xi_k1 = hi + 1.0
    else:
        for j in range(1, int(window) + 1):
            if b(hi + j) < 0:
                xi_k1 = hi + j
                break
        else:
            raise SignSearchError(f"no point with b < 0 found in ({hi}, {hi + window}] at unit spacing")
    left = np.linspace(lo - window, lo, n)[:-1]
    pb2_holds = bool(np.all(evaluate(b, left) <= 0))
    if pb2_holds:
        xi0 = lo - 1.0
    else:
        for j in range(1, int(window) + 1):
            if b(lo - j) > 0:
                xi0 = lo - j
                break
        else:
            raise SignSearchError(f"no point with b > 0 found in [{lo - window}, {lo}) at unit spacing")
    return float(xi0), float(xi_k1), pb1_holds, pb2_holds


def _grid(breaks: list[float], n: int) -> np.ndarray:
    total = breaks[-1] - breaks[0]
    parts = []
    for a, c in zip(breaks, breaks[1:]):
        m = max(2, int(round((n - 1) * (c - a) / total)) + 1)
        parts.append(np.linspace(a, c, m)[:-1])
    parts.append(np.array([breaks[-1]]))
    return np.concatenate(parts)


def _solve(rhs, a: float, c: float, y0, nodes: np.ndarray, tol: float) -> np.ndarray:
    """Values of the ODE solution at ``nodes`` (which lie between ``a`` and ``c``)."""
    sol = solve_ivp(rhs, (a, c), y0, method="DOP853", t_eval=nodes, rtol=1e-13, atol=tol * 1e-2)
    if not sol.success:
        raise RuntimeError(f"integration failed on [{a}, {c}]: {sol.message}")
    return sol.y.T


def _inside(a: float, c: float):
    """Clamp into the open segment so one-sided coefficient values are used."""
    lo, hi = (a, c) if a < c else (c, a)
    lo, hi = np.nextafter(lo, hi), np.nextafter(hi, lo)
    return lambda t: min(max(t, lo), hi)


def build_transform(
    problem: SdeProblem,
    grid_resolution: int = 4096,
    quad_tolerance: float = 1e-10,
    span: float = 2.0,
    window: float = 50.0,
    kappa_min: float = 1e-8,
) -> TransformArtifacts:
    if not problem.xi:
        raise ValueError(f"{problem.name}: no discontinuities to transform around")
    b, sig = problem.drift, problem.diffusion
    xi0, xi_k1, pb1_holds, pb2_holds = _choose_anchors(problem, window)
    lo_end, hi_end = xi0 - span, xi_k1 + span

    probe = np.concatenate([np.linspace(lo_end, hi_end, 20 * grid_resolution), problem.xi, [xi0, xi_k1]])
    kappa = float(evaluate(sig, probe).min())
    if not kappa > kappa_min:
        raise PositivityError(f"{problem.name}: sigma drops to {kappa:g} on [{lo_end}, {hi_end}]")

    b0, b1 = b(xi0), b(xi_k1)

    def R(x):
        return b0 + (x - xi0) * (b1 - b0) / (xi_k1 - xi0)

    inner_breaks = [xi0, *problem.xi, xi_k1]
    grid = _grid([lo_end, *inner_breaks, hi_end], grid_resolution)
    # close neighbours of the anchors make the junction check sharp
    grid = np.unique(np.concatenate([grid, [xi0 - 1e-6, xi0 + 1e-6, xi_k1 - 1e-6, xi_k1 + 1e-6]]))
    piece = np.where(grid <= xi0, -1, np.where(grid >= xi_k1, 1, 0))

    # inside: u = [I, J, |J|-integrand total, int |2b|/sigma^2, int e^-I J, int e^-I]
    state = np.zeros(6)
    inner_rows = {}
    for a, c in zip(inner_breaks, inner_breaks[1:]):
        clamp = _inside(a, c)

        def rhs(t, u, clamp=clamp):
            s = clamp(t)
            bs, ss = b(s), sig(s)
            s2 = ss * ss
            ei = math.exp(u[0])
            g = ei * 2.0 * R(t) / s2
            return [2.0 * bs / s2, g, abs(g), abs(2.0 * bs) / s2, u[1] / ei, 1.0 / ei]

        nodes = grid[(grid >= a) & (grid <= c)]
        rows = _solve(rhs, a, c, state, nodes, quad_tolerance)
        for t, row in zip(nodes, rows):
            inner_rows.setdefault(t, row)
        state = rows[-1].copy()

    K_lower = 2.0 * state[2] + 2.0 * math.exp(state[3]) + 2.0
    K = 1.01 * K_lower + 1.0

    n = grid.size
    phi = np.empty(n)
    dphi = np.empty(n)
    d2phi = np.empty(n)
    psi = np.empty(n)
    bg = evaluate(b, grid)
    sg = evaluate(sig, grid)
    for i, t in enumerate(grid):
        if t in inner_rows:
            I, J, _, _, P, Q = inner_rows[t]
            phi[i] = b0 + P + K * Q
            dphi[i] = math.exp(-I) * (J + K)
            s2 = sg[i] * sg[i]
            d2phi[i] = -2.0 * bg[i] * dphi[i] / s2 + 2.0 * R(t) / s2
            psi[i] = R(t)

    idx0 = int(np.flatnonzero(grid == xi0)[0])
    idx1 = int(np.flatnonzero(grid == xi_k1)[0])
    junctions = {
        "xi0": {"phi": phi[idx0], "dphi": dphi[idx0]},
        "xi_k1": {"phi": phi[idx1], "dphi": dphi[idx1]},
    }

    def outer(sel: np.ndarray, anchor: float, i_anchor: int, relax: bool):
        c_slope = dphi[i_anchor]
        phi_a = phi[i_anchor]
        nodes = grid[sel]
        if not relax:
            phi[sel] = phi_a + (nodes - anchor) * c_slope
            dphi[sel] = c_slope
            d2phi[sel] = 0.0
            psi[sel] = c_slope * bg[sel]
            return
        end = nodes[0] if nodes[0] != anchor else nodes[-1]
        clamp = _inside(anchor, end)

        def rhs(t, u):
            s = clamp(t)
            ss = sig(s)
            e = -2.0 * b(s) / (ss * ss)
            return [e, 1.0 + (c_slope - 1.0) * math.exp(u[0])]

        order = np.argsort(np.abs(nodes - anchor))
        rows = _solve(rhs, anchor, end, [0.0, phi_a], nodes[order], quad_tolerance)
        E = np.empty(nodes.size)
        E[order] = rows[:, 0]
        F = np.empty(nodes.size)
        F[order] = rows[:, 1]
        ex = np.exp(E)
        phi[sel] = F
        dphi[sel] = 1.0 + (c_slope - 1.0) * ex
        d2phi[sel] = (c_slope - 1.0) * ex * (-2.0 * bg[sel] / (sg[sel] ** 2))
        psi[sel] = bg[sel]

    # the junction node itself belongs to the outer piece for phi'' and Psi
    outer(piece == -1, xi0, idx0, pb2_holds)
    outer(piece == 1, xi_k1, idx1, pb1_holds)
    junctions["xi0"].update(outer_phi=phi[idx0], outer_dphi=dphi[idx0])
    junctions["xi_k1"].update(outer_phi=phi[idx1], outer_dphi=dphi[idx1])

    slopes = np.diff(psi) / np.diff(grid)
    l_psi = float(slopes.max())
    H = float(dphi.max()) + quad_tolerance
    return TransformArtifacts(
        problem=problem.name,
        xi0=xi0,
        xi_k1=xi_k1,
        pb1_holds=pb1_holds,
        pb2_holds=pb2_holds,
        K_const=float(K),
        K_lower_bound=float(K_lower),
        H_bound=H,
        l_psi=l_psi,
        L_psi_used=l_psi / H if l_psi < 0 else l_psi,
        kappa=kappa,
        grid=grid,
        piece=piece,
        phi_grid=phi,
        dphi_grid=dphi,
        d2phi_grid=d2phi,
        psi_grid=psi,
        b_grid=bg,
        sigma_grid=sg,
        junctions=junctions,
        phi=PchipInterpolator(grid, phi),
        phi_prime=PchipInterpolator(grid, dphi),
    )


def _one_sided_excess(x: np.ndarray, v: np.ndarray, bound: float) -> float:
    """max over pairs x_i < x_j of (v_j - v_i)/(x_j - x_i) - bound."""
    worst = -math.inf
    for i in range(x.size - 1):
        q = (v[i + 1 :] - v[i]) / (x[i + 1 :] - x[i])
        worst = max(worst, float(q.max()))
    return worst - bound


def _junction_gaps(art: TransformArtifacts) -> tuple[float, float]:
    """Mismatch of phi (absolute) and phi' (relative) at the anchors when each side is Taylor-extrapolated from its neighbour node."""
    x, f, df, d2f = art.grid, art.phi_grid, art.dphi_grid, art.d2phi_grid
    gap_f = gap_df = 0.0
    for anchor in (art.xi0, art.xi_k1):
        i = int(np.flatnonzero(x == anchor)[0])
        ends = []
        for j in (i - 1, i + 1):
            h = anchor - x[j]
            ends.append((f[j] + h * df[j] + 0.5 * h * h * d2f[j], df[j] + h * d2f[j]))
        (fl, dl), (fr, dr) = ends
        gap_f = max(gap_f, abs(fl - fr))
        gap_df = max(gap_df, abs(dl - dr) / (1 + abs(df[i])))
    return gap_f, gap_df


def verify_transform(art: TransformArtifacts, xi, min_dist: float = 1e-2) -> dict:
    """Property report: slope bounds, identity residual, junction continuity, one-sidedness of Psi."""
    x = art.grid
    xi = np.asarray(xi, dtype=np.float64)
    d = np.min(np.abs(x[:, None] - xi[None, :]), axis=1)
    far = d > min_dist
    b, s = art.b_grid, art.sigma_grid
    resid = np.abs(art.dphi_grid * b + 0.5 * art.d2phi_grid * s * s - art.psi_grid)
    scaled = resid / (1.0 + np.abs(b) + s * s)
    junction_gap, slope_gap = _junction_gaps(art)
    sub = slice(None, None, max(1, x.size // 1024))
    psi_excess = _one_sided_excess(x[sub], art.psi_grid[sub], art.l_psi)
    report = {
        "problem": art.problem,
        "xi0": art.xi0,
        "xi_k1": art.xi_k1,
        "K": art.K_const,
        "K_lower_bound": art.K_lower_bound,
        "H": art.H_bound,
        "l_psi": art.l_psi,
        "L_psi": art.L_psi_used,
        "kappa": art.kappa,
        "n_points": int(x.size),
        "min_phi_prime": float(art.dphi_grid.min()),
        "max_abs_phi_second": float(np.abs(art.d2phi_grid[d > 0]).max()),
        "max_scaled_identity_residual": float(scaled[far].max()),
        "junction_phi_gap": junction_gap,
        "junction_phi_prime_gap": slope_gap,
        "psi_one_sided_excess": psi_excess,
    }
    report["pass"] = {
        "phi_prime_ge_1": report["min_phi_prime"] >= 1 - 1e-9,
        "identity_residual": report["max_scaled_identity_residual"] < 1e-6,
        "junction_continuity": junction_gap < 1e-8 and slope_gap < 1e-6,
        "psi_one_sided": psi_excess <= 1e-9 * max(1.0, abs(art.l_psi)),
        "K_above_bound": art.K_const > art.K_lower_bound,
    }
    report["pass"] = {k: bool(v) for k, v in report["pass"].items()}
    report["all_pass"] = all(report["pass"].values())
    return report
