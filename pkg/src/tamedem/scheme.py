"""Tamed-adaptive Euler-Maruyama scheme.

From the current grid value ``y_i`` the next grid time is ``t_i + h(y_i)`` and

    Y_t = y_i + b(y_i) (t - t_i) + sigma_D(y_i) (W_t - W_{t_i}),   t_i < t <= t_{i+1},

with the tamed diffusion ``sigma_D = sigma / (1 + sqrt(D) |sigma|)`` and a step
size that shrinks near the drift discontinuities and where the coefficients
are large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from . import _kernels as K
from .noise import GaussianStream, StreamExhaustedError, ordered_map, sample_stream
from .problems import EmptyDiscontinuitySetError, SdeProblem, dist_to_xi, epsilon0

LogBase = Literal["natural", "10"]

MIN_BLOCK = 1 << 10
MAX_BLOCK = 1 << 16


class StepCapExceeded(RuntimeError):
    """A path needed more than ``max_steps`` steps (or its step fell below float resolution)."""

    def __init__(self, message: str, t: float, y: float, n_steps: int):
        super().__init__(message)
        self.t = t
        self.y = y
        self.n_steps = n_steps


@dataclass(frozen=True)
class SchemeConfig:
    delta: float
    t_end: float
    log_base: LogBase = "natural"
    max_steps: int = 10**9
    record_trajectory: bool = False

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.log_base not in ("natural", "10"):
            raise ValueError(f"log_base must be 'natural' or '10', got {self.log_base!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @property
    def log_inv(self) -> float:
        """log(1/delta) in the configured base."""
        if self.log_base == "10":
            return math.log10(1.0 / self.delta)
        return math.log(1.0 / self.delta)

    @property
    def eps1(self) -> float:
        return math.sqrt(self.delta) * self.log_inv**2

    @property
    def eps2(self) -> float:
        return self.delta * self.log_inv**4

    def with_delta(self, delta: float) -> "SchemeConfig":
        return SchemeConfig(delta, self.t_end, self.log_base, self.max_steps, self.record_trajectory)

    def params(self, problem: SdeProblem) -> np.ndarray:
        return K.step_params(self.delta, self.log_inv, problem.l)


def sigma_tamed(x: float, delta: float, problem: SdeProblem) -> float:
    if delta <= 0:
        raise ValueError("delta must be positive")
    return K.interpreted.tamed(problem.diffusion(x), math.sqrt(delta))


def step_size(x: float, config: SchemeConfig, problem: SdeProblem) -> float:
    """Adaptive step ``h(x)``; always positive."""
    return K.interpreted.step_size(
        x, problem.drift(x), problem.diffusion(x), problem.xi_array, config.params(problem)
    )


def step_branches(
    x: float, config: SchemeConfig, problem: SdeProblem, d: Optional[float] = None
) -> tuple[float, float, float]:
    """All three step-size formulas at ``x``, regardless of which one applies.

    ``d`` overrides the distance to the discontinuity set.
    """
    g = 1.0 + abs(problem.drift(x)) + abs(problem.diffusion(x)) + abs(x) ** problem.l
    g2 = g * g
    log4 = config.log_inv**4
    if d is None:
        d = dist_to_xi(x, problem)
    return config.delta / g2, d * d / (log4 * g2), config.delta**2 * log4 / g2


def step_branch(x: float, config: SchemeConfig, problem: SdeProblem) -> int:
    """Which formula (1, 2 or 3) ``step_size`` uses at ``x``."""
    d = dist_to_xi(x, problem)
    if d > config.eps1:
        return 1
    if d > config.eps2:
        return 2
    return 3


@dataclass(frozen=True)
class DeltaValidity:
    """Outcome of ``D log^4(1/D) < sqrt(D) log^2(1/D) < eps0 / 2``."""

    eps0: Optional[float]
    eps1: float
    eps2: float
    first_ok: bool
    second_ok: bool

    @property
    def ok(self) -> bool:
        return self.first_ok and self.second_ok

    @property
    def warnings(self) -> list[str]:
        out = []
        if not self.first_ok:
            out.append(f"eps2 = {self.eps2:.6g} is not below eps1 = {self.eps1:.6g}")
        if not self.second_ok:
            out.append(f"eps1 = {self.eps1:.6g} is not below eps0/2 = {self.eps0 / 2:.6g}")
        return out


def validate_delta(config: SchemeConfig, problem: SdeProblem) -> DeltaValidity:
    """Check the step parameter against the discontinuity geometry; never raises."""
    try:
        eps0 = epsilon0(problem)
    except EmptyDiscontinuitySetError:
        eps0 = None
    eps1, eps2 = config.eps1, config.eps2
    return DeltaValidity(
        eps0=eps0,
        eps1=eps1,
        eps2=eps2,
        first_ok=eps2 < eps1,
        second_ok=True if eps0 is None else eps1 < 0.5 * eps0,
    )


@dataclass
class PathOutcome:
    y_end: float
    n_steps: int
    trajectory: Optional[np.ndarray] = None  # (n, 2) array of (t, y) grid points, then (T, Y_T)
    obs_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    obs_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    obs_last_grid: np.ndarray = field(default_factory=lambda: np.empty(0))


def _normals(noise: GaussianStream, n: int) -> np.ndarray:
    z = np.ascontiguousarray(noise.normals(n), dtype=np.float64)
    if z.size == 0:
        raise StreamExhaustedError("noise stream returned no values")
    return z


def simulate_path(
    problem: SdeProblem,
    config: SchemeConfig,
    noise: GaussianStream,
    obs_times: Optional[Sequence[float]] = None,
) -> PathOutcome:
    """Integrate one path on ``[0, T]``.

    The last step is cut at ``T``.  ``obs_times`` (within ``[0, T]``) are
    in-step evaluation times: the Brownian increment of the step containing
    them is drawn in pieces, so the value there and the value at the
    preceding grid point are exact for the scheme.
    """
    kern = K.for_problem(problem)
    p = config.params(problem)
    xi = problem.xi_array
    obs = np.sort(np.asarray([] if obs_times is None else obs_times, dtype=np.float64))
    if obs.size and (obs[0] < 0 or obs[-1] > config.t_end):
        raise ValueError("observation times must lie in [0, t_end]")
    obs_y = np.full(obs.size, np.nan)
    obs_ybar = np.full(obs.size, np.nan)
    fs = np.zeros(9)
    fs[K.Y] = problem.x0
    ist = np.zeros(4, dtype=np.int64)
    pieces = []
    block = MIN_BLOCK
    while True:
        z = _normals(noise, block)
        traj = np.empty((z.size + 2, 2)) if config.record_trajectory else np.empty((0, 2))
        used, status = kern.path_block(
            problem.drift,
            problem.diffusion,
            xi,
            p,
            float(config.t_end),
            obs,
            fs,
            ist,
            z,
            obs_y,
            obs_ybar,
            traj,
            config.max_steps,
        )
        if config.record_trajectory:
            pieces.append(traj[: ist[K.TRAJ_N]].copy())
        if status == K.DONE:
            break
        if status == K.STEP_CAP:
            raise StepCapExceeded(
                f"{problem.name}: more than {config.max_steps} steps before t={config.t_end}",
                fs[K.T_GRID],
                fs[K.Y],
                int(ist[K.N_STEPS]),
            )
        if status == K.STALLED:
            raise StepCapExceeded(
                f"{problem.name}: step size below float resolution at t={fs[K.T_GRID]}",
                fs[K.T_GRID],
                fs[K.Y],
                int(ist[K.N_STEPS]),
            )
        if used < z.size:
            raise StreamExhaustedError("kernel stopped early")  # pragma: no cover
        block = min(2 * block, MAX_BLOCK)
    trajectory = np.concatenate(pieces) if config.record_trajectory else None
    return PathOutcome(
        y_end=float(fs[K.Y_END]),
        n_steps=int(ist[K.N_STEPS]),
        trajectory=trajectory,
        obs_times=obs,
        obs_values=obs_y,
        obs_last_grid=obs_ybar,
    )


def simulate_paths(
    problem: SdeProblem,
    config: SchemeConfig,
    n_paths: int,
    master_seed: int,
    obs_times: Optional[Sequence[float]] = None,
    stream_key: Sequence[int] = (),
    workers: Optional[int] = None,
) -> list[PathOutcome]:
    """Independent paths; path ``i`` uses stream ``(master_seed, *stream_key, i)``."""

    def one(i: int) -> PathOutcome:
        return simulate_path(problem, config, sample_stream(master_seed, i, stream_key), obs_times)

    return ordered_map(one, n_paths, workers)


@dataclass(frozen=True)
class MomentEstimate:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray  # nan for a single path
    order: int
    n_paths: int


def _mean_stderr(values: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    n = values.shape[axis]
    mean = values.mean(axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, values.std(axis=axis, ddof=1) / math.sqrt(n)


def empirical_moment(
    problem: SdeProblem,
    config: SchemeConfig,
    order: int,
    n_paths: int,
    t_grid: Sequence[float],
    master_seed: int,
    workers: Optional[int] = None,
) -> MomentEstimate:
    """Monte Carlo estimate of ``E|Y_t|^order`` at each time in ``t_grid``.

    Paths run to ``max(t_grid)``; ``config.t_end`` is ignored.
    """
    if order < 2 or order % 2:
        raise ValueError("order must be a positive even integer")
    if order // 2 > problem.moment_order:
        raise ValueError(f"order/2 = {order // 2} exceeds [p0/2] = {problem.moment_order}")
    times = np.sort(np.asarray(t_grid, dtype=np.float64))
    cfg = SchemeConfig(config.delta, float(times[-1]), config.log_base, config.max_steps)
    paths = simulate_paths(problem, cfg, n_paths, master_seed, times, workers=workers)
    vals = np.abs(np.stack([p.obs_values for p in paths])) ** order
    mean, se = _mean_stderr(vals)
    return MomentEstimate(times, mean, se, order, n_paths)


@dataclass(frozen=True)
class GapEstimate:
    mean: float
    stderr: float
    n_paths: int


def increment_gap(
    problem: SdeProblem,
    config: SchemeConfig,
    n_paths: int,
    master_seed: int,
    workers: Optional[int] = None,
) -> GapEstimate:
    """Estimate ``E|Y_T - Y_{t_last}|`` where ``t_last`` is the last grid time at or before ``T``.

    Because the final step is cut at ``T``, ``T`` falls strictly inside a step
    almost surely.
    """
    paths = simulate_paths(problem, config, n_paths, master_seed, [config.t_end], workers=workers)
    gaps = np.array([abs(p.obs_values[0] - p.obs_last_grid[0]) for p in paths])
    mean, se = _mean_stderr(gaps)
    return GapEstimate(float(mean), float(se), n_paths)
