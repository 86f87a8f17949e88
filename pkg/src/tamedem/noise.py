"""Standard-normal sources for the path integrators.

Integrators pull normals in blocks through :meth:`GaussianStream.normals`.
Seeded streams are split by key: sample ``i`` of an experiment with master
seed ``s`` uses ``SeedSequence(s, spawn_key=(*prefix, i))`` feeding a PCG64
generator, so any sample can be regenerated without the others.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

WORKERS_ENV = "TAMEDEM_WORKERS"

T = TypeVar("T")


class StreamExhaustedError(RuntimeError):
    pass


class GaussianStream:
    """Base class; subclasses return up to ``n`` standard normals per call."""

    def normals(self, n: int) -> np.ndarray:
        raise NotImplementedError


class SeededStream(GaussianStream):
    def __init__(self, seed: int | np.random.SeedSequence, key: Sequence[int] = ()):
        if isinstance(seed, np.random.SeedSequence):
            seq = seed
        else:
            seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
        self.seed_sequence = seq
        self._rng = np.random.Generator(np.random.PCG64(seq))

    def normals(self, n: int) -> np.ndarray:
        return self._rng.standard_normal(n)


class ZeroStream(GaussianStream):
    """All increments zero: the integrator follows the drift-only recursion."""

    def normals(self, n: int) -> np.ndarray:
        return np.zeros(n)


class ReplayStream(GaussianStream):
    """Replays a fixed sequence, then defers to ``then`` (or raises when exhausted)."""

    def __init__(self, values: Iterable[float], then: GaussianStream | None = None):
        self._values = np.asarray(list(values), dtype=np.float64)
        self._pos = 0
        self._then = then

    def normals(self, n: int) -> np.ndarray:
        left = self._values[self._pos : self._pos + n]
        self._pos += left.size
        if left.size == n:
            return left.copy()
        if self._then is None:
            if left.size == 0:
                raise StreamExhaustedError("replay sequence exhausted")
            return left.copy()
        return np.concatenate([left, self._then.normals(n - left.size)])


class RecordingStream(GaussianStream):
    """Wraps a stream and keeps every normal it hands out, in order."""

    def __init__(self, inner: GaussianStream):
        self.inner = inner
        self._blocks: list[np.ndarray] = []

    def normals(self, n: int) -> np.ndarray:
        z = self.inner.normals(n)
        self._blocks.append(z.copy())
        return z

    @property
    def drawn(self) -> np.ndarray:
        return np.concatenate(self._blocks) if self._blocks else np.empty(0)


def sample_stream(master_seed: int, index: int, prefix: Sequence[int] = ()) -> SeededStream:
    return SeededStream(master_seed, key=(*prefix, index))


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[int], T], n: int, workers: int | None = None) -> list[T]:
    """``[fn(0), ..., fn(n-1)]``, optionally on a thread pool; order is always by index.

    The compiled kernels release the GIL, so threads give real parallelism.
    """
    workers = worker_count() if workers is None else workers
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))
