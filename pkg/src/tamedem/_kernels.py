"""Integrator kernels, written once and built both compiled and interpreted.

``make_kernels(jit)`` returns a namespace of functions.  With ``numba.njit``
the coefficient functions must be numba dispatchers; with the identity
decorator they may be any Python callables.  Both builds execute the same
floating-point operations in the same order.

Kernels run in blocks: they consume a caller-supplied array of standard
normals, keep their full state in small mutable arrays and return when the
path finishes, the normals run out, or a limit is hit.

Step parameters are passed as a float array ``p``::

    p = [delta, sqrt(delta), log(1/delta)^4, eps1, eps2, l]
"""

from __future__ import annotations

import math
from types import SimpleNamespace

import numba
import numpy as np

NEED_NORMALS = 0
DONE = 1
STEP_CAP = 2
STALLED = 3

# single-path state slots
T_GRID, Y, T_POS, W, H, B, S, T_NEXT, Y_END = range(9)
N_STEPS, OBS_IDX, TRAJ_N, STARTED = range(4)

# coupled state: per-leg rows
L_Y, L_TGRID, L_W, L_H, L_B, L_S, L_TNEXT = range(7)
C_CLOCK = 0


def make_kernels(jit):
    @jit
    def dist(x, xi):
        d = math.inf
        for c in xi:
            a = abs(x - c)
            if a < d:
                d = a
        return d

    @jit
    def tamed(s, sqrt_delta):
        return s / (1.0 + sqrt_delta * abs(s))

    @jit
    def step_size(x, bx, sx, xi, p):
        delta, log4, eps1, eps2, l = p[0], p[2], p[3], p[4], p[5]
        ax = abs(x)
        if l == 2.0:
            xl = ax * ax
        elif l == 1.0:
            xl = ax
        else:
            xl = ax**l
        g = 1.0 + abs(bx) + abs(sx) + xl
        g2 = g * g
        d = dist(x, xi)
        if d > eps1:
            return delta / g2
        if d > eps2:
            return d * d / (log4 * g2)
        return delta * delta * log4 / g2

    @jit
    def path_block(drift, diffusion, xi, p, t_end, obs_t, fs, ist, z, obs_y, obs_ybar, traj, max_steps):
        t_grid, y, t_pos, w = fs[T_GRID], fs[Y], fs[T_POS], fs[W]
        h, bx, st, t_next = fs[H], fs[B], fs[S], fs[T_NEXT]
        n_steps, oi, tn = ist[N_STEPS], ist[OBS_IDX], 0
        n_obs = obs_t.shape[0]
        record = traj.shape[0] > 0
        k = 0
        status = NEED_NORMALS
        new_step = ist[STARTED] == 0
        ist[STARTED] = 1
        while True:
            if new_step:
                new_step = False
                if n_steps >= max_steps:
                    status = STEP_CAP
                    break
                bx = drift(y)
                sx = diffusion(y)
                h = step_size(y, bx, sx, xi, p)
                st = tamed(sx, p[1])
                t_next = t_grid + h
                n_steps += 1
                if record:
                    traj[tn, 0] = t_grid
                    traj[tn, 1] = y
                    tn += 1
                if not t_next > t_grid:
                    status = STALLED
                    break
            seg_end = t_next if t_next < t_end else t_end
            if oi < n_obs and obs_t[oi] < seg_end:
                seg_end = obs_t[oi]
            if seg_end > t_pos:
                if k == z.shape[0]:
                    break
                w += math.sqrt(seg_end - t_pos) * z[k]
                k += 1
                t_pos = seg_end
            while oi < n_obs and obs_t[oi] <= t_pos:
                obs_y[oi] = y + bx * (t_pos - t_grid) + st * w
                obs_ybar[oi] = y
                oi += 1
            if t_pos >= t_end:
                y_end = y + bx * (t_end - t_grid) + st * w
                fs[Y_END] = y_end
                if record:
                    traj[tn, 0] = t_end
                    traj[tn, 1] = y_end
                    tn += 1
                status = DONE
                break
            if t_pos >= t_next:
                y = y + bx * h + st * w
                t_grid = t_next
                w = 0.0
                new_step = True
        fs[T_GRID], fs[Y], fs[T_POS], fs[W] = t_grid, y, t_pos, w
        fs[H], fs[B], fs[S], fs[T_NEXT] = h, bx, st, t_next
        ist[N_STEPS], ist[OBS_IDX], ist[TRAJ_N] = n_steps, oi, tn
        return k, status

    @jit
    def start_step(drift, diffusion, xi, p, y, t_grid):
        bx = drift(y)
        sx = diffusion(y)
        h = step_size(y, bx, sx, xi, p)
        return bx, tamed(sx, p[1]), h, t_grid + h

    @jit
    def coupled_block(drift, diffusion, xi, params, t_end, legs, clock, counts, z, rec, max_steps):
        """Advance coarse (row 0) and fine (row 1) legs on their merged event clock.

        ``counts = [n_coarse, n_fine, started, rec_n]``; ``rec`` receives the
        coarse leg's (step length, Brownian increment) pairs when non-empty.
        """
        pc = params[0]
        pf = params[1]
        t = clock[C_CLOCK]
        yc, tc, wc, hc, bc, sc, nextc = legs[0, 0], legs[0, 1], legs[0, 2], legs[0, 3], legs[0, 4], legs[0, 5], legs[0, 6]
        yf, tf, wf, hf, bf, sf, nextf = legs[1, 0], legs[1, 1], legs[1, 2], legs[1, 3], legs[1, 4], legs[1, 5], legs[1, 6]
        nc, nf = counts[0], counts[1]
        record = rec.shape[0] > 0
        k = 0
        rn = 0
        status = NEED_NORMALS
        if counts[2] == 0:
            counts[2] = 1
            bc, sc, hc, nextc = start_step(drift, diffusion, xi, pc, yc, tc)
            bf, sf, hf, nextf = start_step(drift, diffusion, xi, pf, yf, tf)
            nc += 1
            nf += 1
            if not (nextc > tc and nextf > tf):
                status = STALLED
        while status == NEED_NORMALS:
            target = nextc if nextc < nextf else nextf
            if target > t_end:
                target = t_end
            if target > t:
                if k == z.shape[0]:
                    break
                dw = math.sqrt(target - t) * z[k]
                k += 1
                wc += dw
                wf += dw
                t = target
            if t >= t_end:
                if record:
                    rec[rn, 0] = t_end - tc
                    rec[rn, 1] = wc
                    rn += 1
                yc = yc + bc * (t_end - tc) + sc * wc
                yf = yf + bf * (t_end - tf) + sf * wf
                tc = t_end
                tf = t_end
                wc = 0.0
                wf = 0.0
                status = DONE
                break
            if t >= nextc:
                if record:
                    rec[rn, 0] = hc
                    rec[rn, 1] = wc
                    rn += 1
                yc = yc + bc * hc + sc * wc
                tc = nextc
                wc = 0.0
                if nc >= max_steps:
                    status = STEP_CAP
                nc += 1
                bc, sc, hc, nextc = start_step(drift, diffusion, xi, pc, yc, tc)
                if not nextc > tc:
                    status = STALLED
            if t >= nextf:
                yf = yf + bf * hf + sf * wf
                tf = nextf
                wf = 0.0
                if nf >= max_steps:
                    status = STEP_CAP
                nf += 1
                bf, sf, hf, nextf = start_step(drift, diffusion, xi, pf, yf, tf)
                if not nextf > tf:
                    status = STALLED
        clock[C_CLOCK] = t
        legs[0, 0], legs[0, 1], legs[0, 2], legs[0, 3], legs[0, 4], legs[0, 5], legs[0, 6] = yc, tc, wc, hc, bc, sc, nextc
        legs[1, 0], legs[1, 1], legs[1, 2], legs[1, 3], legs[1, 4], legs[1, 5], legs[1, 6] = yf, tf, wf, hf, bf, sf, nextf
        counts[0], counts[1], counts[3] = nc, nf, rn
        return k, status

    return SimpleNamespace(
        dist=dist,
        tamed=tamed,
        step_size=step_size,
        path_block=path_block,
        coupled_block=coupled_block,
    )


compiled = make_kernels(numba.njit(nogil=True))
interpreted = make_kernels(lambda f: f)


def for_problem(problem):
    return compiled if problem.is_compiled else interpreted


def step_params(delta: float, log_inv: float, l: float) -> np.ndarray:
    log2 = log_inv * log_inv
    return np.array(
        [delta, math.sqrt(delta), log2 * log2, math.sqrt(delta) * log2, delta * log2 * log2, l],
        dtype=np.float64,
    )
