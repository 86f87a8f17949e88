"""Coarse/fine path pairs driven by one Brownian motion.

The two legs keep their own adaptive grids.  A global clock jumps to the
earlier of the two next grid times; the Brownian increment over each jump is
added to both legs' running increments, and a leg takes its Euler update when
the clock reaches its own grid time.  Ties update the coarse leg first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .noise import GaussianStream, StreamExhaustedError, ordered_map, sample_stream
from .problems import SdeProblem
from .scheme import MAX_BLOCK, MIN_BLOCK, SchemeConfig, StepCapExceeded, _normals


@dataclass(frozen=True)
class CoupledSample:
    y_coarse: float
    y_fine: float
    abs_diff: float
    n_steps_coarse: int
    n_steps_fine: int


class IncrementRecorder:
    """Collects the coarse leg's (step length, Brownian increment) pairs."""

    def __init__(self):
        self._chunks: list[np.ndarray] = []

    def add(self, rows: np.ndarray) -> None:
        self._chunks.append(rows.copy())

    @property
    def steps(self) -> np.ndarray:
        return np.concatenate(self._chunks) if self._chunks else np.empty((0, 2))


def simulate_coupled(
    problem: SdeProblem,
    delta_coarse: float,
    config: SchemeConfig,
    noise: GaussianStream,
    *,
    delta_fine: Optional[float] = None,
    recorder: Optional[IncrementRecorder] = None,
) -> CoupledSample:
    """One coupled sample at step parameters ``delta_coarse`` and ``delta_coarse / 2``.

    ``config`` supplies the horizon, log base and step cap; its ``delta`` is
    ignored.  ``delta_fine`` overrides the fine parameter (testing hook).
    """
    kern = K.for_problem(problem)
    fine = delta_coarse / 2 if delta_fine is None else delta_fine
    params = np.stack(
        [config.with_delta(delta_coarse).params(problem), config.with_delta(fine).params(problem)]
    )
    legs = np.zeros((2, 7))
    legs[:, K.L_Y] = problem.x0
    clock = np.zeros(1)
    counts = np.zeros(4, dtype=np.int64)
    xi = problem.xi_array
    block = MIN_BLOCK
    while True:
        z = _normals(noise, block)
        rec = np.empty((z.size + 2, 2)) if recorder is not None else np.empty((0, 2))
        used, status = kern.coupled_block(
            problem.drift,
            problem.diffusion,
            xi,
            params,
            float(config.t_end),
            legs,
            clock,
            counts,
            z,
            rec,
            config.max_steps,
        )
        if recorder is not None:
            recorder.add(rec[: counts[3]])
        if status == K.DONE:
            break
        if status in (K.STEP_CAP, K.STALLED):
            worst = int(np.argmax(counts[:2]))
            why = "step cap exceeded" if status == K.STEP_CAP else "step below float resolution"
            raise StepCapExceeded(
                f"{problem.name}: {why} on the {'fine' if worst else 'coarse'} leg at t={clock[0]}",
                float(clock[0]),
                float(legs[worst, K.L_Y]),
                int(counts[worst]),
            )
        if used < z.size:
            raise StreamExhaustedError("kernel stopped early")  # pragma: no cover
        block = min(2 * block, MAX_BLOCK)
    yc, yf = float(legs[0, K.L_Y]), float(legs[1, K.L_Y])
    return CoupledSample(yc, yf, abs(yf - yc), int(counts[0]), int(counts[1]))


@dataclass(frozen=True)
class LevelEstimate:
    delta_coarse: float
    n_samples: int
    mean: float
    std: float
    stderr: float
    n_failed: int
    mean_steps_coarse: float
    mean_steps_fine: float


def summarize(samples: Sequence[CoupledSample], delta_coarse: float) -> LevelEstimate:
    d = np.array([s.abs_diff for s in samples])
    n = d.size
    std = float(d.std(ddof=1)) if n > 1 else math.nan
    return LevelEstimate(
        delta_coarse=delta_coarse,
        n_samples=n,
        mean=float(d.mean()),
        std=std,
        stderr=std / math.sqrt(n),
        n_failed=0,
        mean_steps_coarse=float(np.mean([s.n_steps_coarse for s in samples])),
        mean_steps_fine=float(np.mean([s.n_steps_fine for s in samples])),
    )


class LevelFailed(RuntimeError):
    def __init__(self, message: str, n_failed: int, errors: list):
        super().__init__(message)
        self.n_failed = n_failed
        self.errors = errors


def sample_level(
    problem: SdeProblem,
    delta_coarse: float,
    config: SchemeConfig,
    n_samples: int,
    master_seed: int,
    *,
    stream_key: Sequence[int] = (),
    stream_index=None,
    workers: Optional[int] = None,
) -> LevelEstimate:
    """Mean, standard deviation and standard error of ``|Y_fine - Y_coarse|`` at ``T``.

    Sample ``i`` draws from stream ``(master_seed, *stream_key, i)``;
    ``stream_index`` remaps sample indices to stream indices (testing hook).
    Any failed sample fails the whole level.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    index = (lambda i: i) if stream_index is None else stream_index

    def one(i: int):
        try:
            return simulate_coupled(
                problem, delta_coarse, config, sample_stream(master_seed, index(i), stream_key)
            )
        except StepCapExceeded as exc:
            return exc

    results = ordered_map(one, n_samples, workers)
    errors = [r for r in results if isinstance(r, Exception)]
    if errors:
        raise LevelFailed(
            f"{len(errors)} of {n_samples} samples failed at delta={delta_coarse:g}: {errors[0]}",
            len(errors),
            errors,
        )
    return summarize(results, delta_coarse)
