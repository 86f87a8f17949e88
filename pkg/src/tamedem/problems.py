"""Scalar SDE problems ``dX = b(X) dt + sigma(X) dW`` and the built-in benchmarks.

Built-in coefficients are numba-compiled so the path integrators can run them
in nopython mode; they remain ordinary callables from Python.  Custom problems
may use plain Python functions, in which case the (slower) interpreted kernels
are used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

Coefficient = Callable[[float], float]

__all__ = [
    "SdeProblem",
    "UnknownProblemError",
    "EmptyDiscontinuitySetError",
    "BUILTIN_NAMES",
    "get_problem",
    "dist_to_xi",
    "epsilon0",
    "evaluate",
]


class UnknownProblemError(KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown problem {name!r}; available: {', '.join(BUILTIN_NAMES)}")

    def __str__(self) -> str:
        return self.args[0]


class EmptyDiscontinuitySetError(ValueError):
    """Raised when a quantity only makes sense for a nonempty discontinuity set."""


@dataclass(frozen=True)
class SdeProblem:
    """Coefficients of a scalar SDE plus the constants of its growth assumptions.

    ``xi`` lists the points where the drift may jump, ``mu``/``nu`` give a
    radius around each of them on which the diffusion stays above ``nu``.
    ``one_sided_lipschitz`` is metadata only (not used by the integrators); its
    name (``L1`` or ``L2``) is kept in ``lipschitz_label``.
    """

    name: str
    drift: Coefficient
    diffusion: Coefficient
    xi: tuple[float, ...]
    x0: float
    l: float
    m: float
    alpha: float
    p0: float
    gamma: float
    eta: float
    mu: float
    nu: float
    one_sided_lipschitz: Optional[float] = None
    lipschitz_label: str = "L1"
    notes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        xi = tuple(float(v) for v in self.xi)
        object.__setattr__(self, "xi", xi)
        if any(b <= a for a, b in zip(xi, xi[1:])):
            raise ValueError("xi must be strictly increasing")
        if self.l < 1:
            raise ValueError("l must be >= 1")
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if not 0.0 <= self.alpha <= 0.5:
            raise ValueError("alpha must lie in [0, 1/2]")
        if self.p0 < 2:
            raise ValueError("p0 must be >= 2")
        if not (self.mu > 0 and self.nu > 0):
            raise ValueError("mu and nu must be positive")
        if len(xi) >= 2 and self.mu > min(np.diff(xi)):
            raise ValueError("mu exceeds the smallest gap between discontinuities")

    @property
    def xi_array(self) -> np.ndarray:
        return np.asarray(self.xi, dtype=np.float64)

    @property
    def is_compiled(self) -> bool:
        """True when both coefficients are numba dispatchers."""
        return isinstance(self.drift, numba.core.dispatcher.Dispatcher) and isinstance(
            self.diffusion, numba.core.dispatcher.Dispatcher
        )

    @property
    def moment_order(self) -> int:
        """Integer part of p0/2."""
        return int(math.floor(self.p0 / 2))

    def convergence_hypothesis(self) -> bool:
        """``[p0/2] >= (l+1) v (1+2 alpha+2m)``, needed for the L1 rate results."""
        return self.moment_order >= max(self.l + 1, 1 + 2 * self.alpha + 2 * self.m)

    def cost_exponent(self) -> float:
        """Theoretical exponent zeta in E[N_T] <= C T Delta^zeta."""
        threshold = 3 * (1 + 2 * self.alpha + 2 * self.m) / (1 + 2 * self.alpha)
        if self.moment_order > threshold:
            return -1.0
        return self.alpha / 2 - 7 / 4

    def sigma_floor_holds(self, n: int = 2001) -> bool:
        """Check ``sigma >= nu`` on a grid over every ``[xi_i - mu, xi_i + mu]``."""
        for c in self.xi:
            xs = np.linspace(c - self.mu, c + self.mu, n)
            if evaluate(self.diffusion, xs).min() < self.nu:
                return False
        return True

    def describe(self) -> dict:
        """JSON-ready metadata for provenance records."""
        return {
            "name": self.name,
            "x0": self.x0,
            "xi": list(self.xi),
            "constants": {
                "l": self.l,
                "m": self.m,
                "alpha": self.alpha,
                "p0": self.p0,
                "gamma": self.gamma,
                "eta": self.eta,
                self.lipschitz_label: self.one_sided_lipschitz,
                "mu": self.mu,
                "nu": self.nu,
            },
            "notes": dict(self.notes),
        }


def evaluate(fn: Coefficient, xs) -> np.ndarray:
    """Evaluate a scalar coefficient on an array of points."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    if isinstance(fn, numba.core.dispatcher.Dispatcher):
        return _evaluate_jit(fn, xs)
    return np.fromiter((fn(float(x)) for x in xs.ravel()), dtype=np.float64, count=xs.size).reshape(
        xs.shape
    )


@numba.njit
def _evaluate_jit(fn, xs):
    flat = xs.ravel()
    out = np.empty(flat.shape[0])
    for i in range(flat.shape[0]):
        out[i] = fn(flat[i])
    return out.reshape(xs.shape)


def dist_to_xi(x: float, problem: SdeProblem) -> float:
    """Distance from ``x`` to the discontinuity set; ``inf`` if the set is empty."""
    if not problem.xi:
        return math.inf
    return min(abs(x - c) for c in problem.xi)


def epsilon0(problem: SdeProblem) -> float:
    """``mu`` capped by the smallest gap between consecutive discontinuities."""
    if not problem.xi:
        raise EmptyDiscontinuitySetError(f"{problem.name}: no discontinuities, epsilon0 undefined")
    gaps = np.diff(problem.xi)
    return float(min(problem.mu, gaps.min())) if gaps.size else float(problem.mu)


# ---------------------------------------------------------------------------
# Built-in benchmark coefficients.  Fractional powers of possibly negative
# arguments are taken as real cube roots of even powers, e.g. x^(2/3) = (x^2)^(1/3).

_THIRD = 1.0 / 3.0


@numba.njit(cache=True)
def ex1_drift(x):
    if x >= 0.0:
        return -x - x**3
    return 1.0 - x - x**3


@numba.njit(cache=True)
def ex12_diffusion(x):
    if x < -1.0:
        return 0.0
    return (1.0 + x) * (1.0 + (x * x) ** _THIRD)


@numba.njit(cache=True)
def ex2_drift(x):
    if x >= 0.0:
        return -1.0 + x - x**3
    return x - x**3


@numba.njit(cache=True)
def ex3_drift(x):
    if x > 2.0:
        return 1.0 + x - x**3
    if x >= 0.0:
        return x * x + 1.0
    return x - x**3


@numba.njit(cache=True)
def ex3_diffusion(x):
    x4 = x**4
    return 1.0 + math.sqrt((x4 + x4**_THIRD) / 14.0)


@numba.njit(cache=True)
def ex4_drift(x):
    if x > 2.0:
        return 1.0 + x - (x * x) ** _THIRD
    if x >= 0.0:
        return x * x + 1.0
    return x


@numba.njit(cache=True)
def ex4_diffusion(x):
    return 1.0 + (x * x) ** _THIRD


_TABLE = {
    # name: drift, diffusion, xi, x0, p0, l, m, alpha, gamma, (label, value)
    "ex1": (ex1_drift, ex12_diffusion, (0.0,), 0.0, 20.0, 2.0, 1.0, 1 / 6, -1.0, ("L1", -1.0)),
    "ex2": (ex2_drift, ex12_diffusion, (0.0,), 0.0, 20.0, 2.0, 1.0, 1 / 6, 1.0, ("L1", 1.0)),
    "ex3": (ex3_drift, ex3_diffusion, (0.0, 2.0), 0.2, 26.0, 2.0, 1.0, 1 / 6, -1.0, ("L2", -1.0)),
    "ex4": (ex4_drift, ex4_diffusion, (0.0, 2.0), 0.0, 20.0, 1.0, 4 / 3, 1 / 6, 1.0, ("L2", 1.0)),
}

BUILTIN_NAMES = tuple(_TABLE)

ETA_WINDOW = 50.0


def default_mu(xi) -> float:
    if len(xi) < 2:
        return 0.5
    return float(np.diff(xi).min()) / 2


def grid_nu(diffusion: Coefficient, xi, mu: float, n: int = 20001) -> float:
    """Smallest diffusion value on dense grids over the mu-balls around ``xi``."""
    return float(min(evaluate(diffusion, np.linspace(c - mu, c + mu, n)).min() for c in xi))


def certified_eta(
    drift: Coefficient,
    diffusion: Coefficient,
    p0: float,
    gamma: float,
    xi=(),
    window: float = ETA_WINDOW,
    n: int = 400_001,
) -> float:
    """Grid bound for ``sup x b(x) + (p0-1)/2 sigma(x)^2 - gamma x^2`` on ``[-window, window]``.

    The grid maximum is padded by the largest change between neighbouring grid
    values over cells that do not contain a discontinuity; one-sided limits at
    each discontinuity are sampled explicitly.
    """
    xs = np.linspace(-window, window, n)
    extra = [c + s for c in xi for s in (-1e-12, 0.0, 1e-12)]
    xs = np.unique(np.concatenate([xs, extra]))
    b = evaluate(drift, xs)
    s = evaluate(diffusion, xs)
    f = xs * b + 0.5 * (p0 - 1) * s * s - gamma * xs * xs
    smooth = np.ones(xs.size - 1, dtype=bool)
    for c in xi:
        smooth &= ~((xs[:-1] < c) & (xs[1:] >= c))
    return float(f.max() + np.abs(np.diff(f))[smooth].max())


_cache: dict[str, SdeProblem] = {}


def _build(name: str) -> SdeProblem:
    drift, diffusion, xi, x0, p0, l, m, alpha, gamma, (label, lip) = _TABLE[name]
    mu = default_mu(xi)
    nu = grid_nu(diffusion, xi, mu)
    eta = certified_eta(drift, diffusion, p0, gamma, xi)
    notes = {
        "xi_source": "read off the piecewise drift formula",
        "mu_nu": "mu = half the smallest xi gap (0.5 for one point); nu = grid minimum of sigma",
        "eta": f"grid bound over [-{ETA_WINDOW:g}, {ETA_WINDOW:g}]",
    }
    if name == "ex4":
        notes["eta"] += "; not a global bound (sigma^2 ~ |x|^(4/3) is not dominated when gamma = 1)"
    return SdeProblem(
        name=name,
        drift=drift,
        diffusion=diffusion,
        xi=xi,
        x0=x0,
        l=l,
        m=m,
        alpha=alpha,
        p0=p0,
        gamma=gamma,
        eta=eta,
        mu=mu,
        nu=nu,
        one_sided_lipschitz=lip,
        lipschitz_label=label,
        notes=notes,
    )


def get_problem(name: str) -> SdeProblem:
    """Look up a built-in benchmark problem by name (``ex1`` .. ``ex4``)."""
    if name not in _TABLE:
        raise UnknownProblemError(name)
    if name not in _cache:
        _cache[name] = _build(name)
    return _cache[name]
