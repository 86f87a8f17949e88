"""Experiment drivers: empirical convergence rate, cost exponent, and OLS fits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats as sps

from .coupling import LevelEstimate, sample_level
from .problems import SdeProblem
from .scheme import SchemeConfig, simulate_paths


class DegenerateDesignError(ValueError):
    pass


class DegenerateLevelError(RuntimeError):
    pass


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    slope_stderr: float
    intercept_stderr: float
    slope_ci95: tuple[float, float]
    intercept_ci95: tuple[float, float]
    n_points: int
    r_squared: float

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_ci": list(self.slope_ci95),
            "intercept_ci": list(self.intercept_ci95),
            "r_squared": self.r_squared,
            "n_points": self.n_points,
        }


def ols_fit(points: Sequence[tuple[float, float]]) -> RegressionFit:
    """Ordinary least squares with Student-t 95% intervals (n - 2 degrees of freedom)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise DegenerateDesignError("need at least 3 (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    n = x.size
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DegenerateDesignError("x values are all equal")
    slope = float(dx @ (y - ym)) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ssr = float(resid @ resid)
    sst = float((y - ym) @ (y - ym))
    s2 = ssr / (n - 2)
    se_slope = math.sqrt(s2 / sxx)
    se_int = math.sqrt(s2 * (1.0 / n + xm * xm / sxx))
    q = float(sps.t.ppf(0.975, n - 2))
    return RegressionFit(
        slope=slope,
        intercept=intercept,
        slope_stderr=se_slope,
        intercept_stderr=se_int,
        slope_ci95=(slope - q * se_slope, slope + q * se_slope),
        intercept_ci95=(intercept - q * se_int, intercept + q * se_int),
        n_points=n,
        r_squared=1.0 - ssr / sst if sst > 0 else 1.0,
    )


LevelSampler = Callable[..., LevelEstimate]


@dataclass
class RateExperiment:
    problem: str
    delta0: float
    levels: int
    samples: list[int]
    t_end: float
    master_seed: int
    log_base: str
    per_level: list[LevelEstimate]
    fit: RegressionFit

    @property
    def rate(self) -> float:
        return self.fit.slope

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "delta_coarse", "delta_fine", "n_samples", "mean_abs_diff", "stderr"])
        for k, lev in enumerate(self.per_level, start=1):
            d = lev.delta_coarse
            w.writerow([k, repr(d), repr(d / 2), lev.n_samples, repr(lev.mean), repr(lev.stderr)])
        return buf.getvalue()


def _per_level(samples, levels: int) -> list[int]:
    if isinstance(samples, int):
        return [samples] * levels
    out = [int(s) for s in samples]
    if len(out) != levels:
        raise ValueError(f"got {len(out)} sample counts for {levels} levels")
    return out


def estimate_rate(
    problem: SdeProblem,
    delta0: float,
    levels: int,
    samples,
    t_end: float,
    master_seed: int,
    *,
    log_base: str = "natural",
    max_steps: int = 10**9,
    level_sampler: Optional[LevelSampler] = None,
    workers: Optional[int] = None,
) -> RateExperiment:
    """Regress ``log r_k`` on ``-k log 2`` for ``k = 1..levels``; the slope is the rate.

    Level ``k`` couples step parameters ``2^-k delta0`` and ``2^-(k+1) delta0``
    with streams keyed ``(master_seed, k, sample)``.
    """
    counts = _per_level(samples, levels)
    sampler = level_sampler or sample_level
    config = SchemeConfig(delta0, t_end, log_base, max_steps)
    per_level = []
    points = []
    for k in range(1, levels + 1):
        dk = delta0 * 2.0**-k
        lev = sampler(problem, dk, config, counts[k - 1], master_seed, stream_key=(k,), workers=workers)
        if not lev.mean > 0:
            raise DegenerateLevelError(f"level {k}: mean difference is {lev.mean}; cannot take a log")
        per_level.append(lev)
        points.append((-k * math.log(2.0), math.log(lev.mean)))
    return RateExperiment(
        problem=problem.name,
        delta0=delta0,
        levels=levels,
        samples=counts,
        t_end=t_end,
        master_seed=master_seed,
        log_base=log_base,
        per_level=per_level,
        fit=ols_fit(points),
    )


@dataclass(frozen=True)
class CostPoint:
    delta: float
    n_samples: int
    mean_steps: float
    stderr: float


@dataclass
class CostExperiment:
    problem: str
    deltas: list[float]
    samples: int
    t_end: float
    master_seed: int
    log_base: str
    per_delta: list[CostPoint]
    fit: RegressionFit

    @property
    def exponent(self) -> float:
        return self.fit.slope

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "n_samples", "mean_steps", "stderr"])
        for c in self.per_delta:
            w.writerow([repr(c.delta), c.n_samples, repr(c.mean_steps), repr(c.stderr)])
        return buf.getvalue()


StepSampler = Callable[[SdeProblem, SchemeConfig, int, int, tuple], np.ndarray]


def _sample_steps(problem, config, n, master_seed, stream_key, workers=None) -> np.ndarray:
    paths = simulate_paths(problem, config, n, master_seed, stream_key=stream_key, workers=workers)
    return np.array([p.n_steps for p in paths], dtype=np.float64)


def estimate_cost(
    problem: SdeProblem,
    deltas: Sequence[float],
    samples: int,
    t_end: float,
    master_seed: int,
    *,
    log_base: str = "natural",
    max_steps: int = 10**9,
    step_sampler: Optional[StepSampler] = None,
    workers: Optional[int] = None,
) -> CostExperiment:
    """Regress ``log E[N_T]`` on ``log delta``; the slope is the cost exponent."""
    deltas = [float(d) for d in deltas]
    if len(set(deltas)) < 3:
        raise DegenerateDesignError("need at least 3 distinct delta values")
    per_delta = []
    for j, d in enumerate(deltas):
        cfg = SchemeConfig(d, t_end, log_base, max_steps)
        if step_sampler is None:
            steps = _sample_steps(problem, cfg, samples, master_seed, (j,), workers)
        else:
            steps = np.asarray(step_sampler(problem, cfg, samples, master_seed, (j,)), dtype=np.float64)
        se = float(steps.std(ddof=1) / math.sqrt(steps.size)) if steps.size > 1 else math.nan
        per_delta.append(CostPoint(d, int(steps.size), float(steps.mean()), se))
    fit = ols_fit([(math.log(c.delta), math.log(c.mean_steps)) for c in per_delta])
    return CostExperiment(problem.name, deltas, samples, t_end, master_seed, log_base, per_delta, fit)


@dataclass
class InterceptShift:
    intercept_a: float
    intercept_b: float
    difference: float
    runs: tuple[RateExperiment, RateExperiment] = field(repr=False)


def intercept_shift(
    problem: SdeProblem,
    delta0: float,
    levels: int,
    samples,
    t_end_a: float,
    t_end_b: float,
    master_seed: int,
    **kwargs,
) -> InterceptShift:
    """Rate-regression intercepts at two horizons and their absolute difference."""
    a = estimate_rate(problem, delta0, levels, samples, t_end_a, master_seed, **kwargs)
    b = estimate_rate(problem, delta0, levels, samples, t_end_b, master_seed, **kwargs)
    ia, ib = a.fit.intercept, b.fit.intercept
    return InterceptShift(ia, ib, abs(ia - ib), (a, b))


def level_record(lev: LevelEstimate) -> dict:
    return asdict(lev)
