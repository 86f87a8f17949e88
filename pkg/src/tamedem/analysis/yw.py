"""Yamada-Watanabe smoothing of ``|x|``.

``psi`` is a continuous density supported on ``[eps/delta, eps]`` with
``psi(z) <= 2 / (z log delta)``; ``phi(x) = int_0^|x| int_0^y psi``.  Here
``psi(z) = w(z) / (c z log delta)`` where ``w`` is a trapezoid taper (0 at
the support ends, 1 on the inner part) and ``c`` normalises the mass to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class YwParams:
    delta: float
    eps: float
    taper: Optional[float] = None

    def __post_init__(self):
        if not self.delta > 1:
            raise ValueError("delta must exceed 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.taper is None:
            object.__setattr__(self, "taper", min(0.1, (self.delta - 1) / (2 * (self.delta + 1))))
        if not 0 < self.taper <= (self.delta - 1) / (self.delta + 1):
            raise ValueError("taper too wide for this delta")

    @property
    def lo(self) -> float:
        return self.eps / self.delta

    @property
    def hi(self) -> float:
        return self.eps

    @property
    def knots(self) -> tuple[float, float, float, float]:
        """Support ends and the two taper corners."""
        return self.lo, self.lo * (1 + self.taper), self.hi * (1 - self.taper), self.hi

    @property
    def norm(self) -> float:
        """Mass of the un-normalised density ``w(z) / (z log delta)``."""
        tau = self.taper
        rise = 1 - math.log1p(tau) / tau
        flat = math.log(self.delta) + math.log((1 - tau) / (1 + tau))
        fall = -math.log1p(-tau) / tau - 1
        return (rise + flat + fall) / math.log(self.delta)


def _taper(z: float, params: YwParams) -> float:
    a, a1, e1, e = params.knots
    if z <= a or z >= e:
        return 0.0
    if z < a1:
        return (z - a) / (a1 - a)
    if z > e1:
        return (e - z) / (e - e1)
    return 1.0


def yw_psi(z: float, params: YwParams) -> float:
    if z <= params.lo or z >= params.hi:
        return 0.0
    return _taper(z, params) / (params.norm * z * math.log(params.delta))


def _quad(f, a: float, b: float, params: YwParams, tol: float) -> float:
    if b <= a:
        return 0.0
    pts = [p for p in params.knots if a < p < b]
    val, err = integrate.quad(f, a, b, points=pts or None, epsabs=tol, epsrel=tol, limit=200)
    if err > max(tol, tol * abs(val)) * 10:
        raise QuadratureError(f"quadrature error {err:.3g} on [{a}, {b}]")
    return val


def psi_mass(params: YwParams, tol: float = 1e-13) -> float:
    return _quad(lambda z: yw_psi(z, params), params.lo, params.hi, params, tol)


def yw_phi_prime(x: float, params: YwParams, tol: float = 1e-13) -> float:
    """``sign(x) int_0^|x| psi``."""
    ax = abs(x)
    if ax <= params.lo:
        return 0.0
    inner = _quad(lambda z: yw_psi(z, params), params.lo, min(ax, params.hi), params, tol)
    return math.copysign(inner, x)


def yw_phi_second(x: float, params: YwParams) -> float:
    return yw_psi(abs(x), params)


def yw_phi(x: float, params: YwParams, tol: float = 1e-10) -> float:
    """``int_0^|x| int_0^y psi(z) dz dy`` by nested adaptive quadrature."""
    ax = abs(x)
    if ax <= params.lo:
        return 0.0
    inner = lambda y: yw_phi_prime(y, params, tol * 1e-2)
    top = min(ax, params.hi)
    val = _quad(inner, params.lo, top, params, tol)
    if ax > params.hi:
        # phi' == 1 past the support
        val += ax - params.hi
    return val


# closed forms, used as an independent check of the quadrature route
def _w_over_z_integral(a: float, b: float, params: YwParams) -> float:
    """``int_a^b w(z)/z dz`` for ``lo <= a <= b <= hi`` exactly."""
    lo, a1, e1, hi = params.knots
    total = 0.0
    for left, right, kind in ((lo, a1, "rise"), (a1, e1, "flat"), (e1, hi, "fall")):
        u, v = max(a, left), min(b, right)
        if v <= u:
            continue
        if kind == "flat":
            total += math.log(v / u)
        elif kind == "rise":
            total += ((v - u) - lo * math.log(v / u)) / (a1 - lo)
        else:
            total += (hi * math.log(v / u) - (v - u)) / (hi - e1)
    return total


def phi_prime_exact(x: float, params: YwParams) -> float:
    ax = min(abs(x), params.hi)
    if ax <= params.lo:
        return 0.0
    val = _w_over_z_integral(params.lo, ax, params) / (params.norm * math.log(params.delta))
    return math.copysign(val, x)


def verify_yw(params: YwParams, sample_count: int = 1000, seed: int = 0, tol: float = 1e-8) -> dict:
    """Sample ``x`` and report the worst violation of each smoothing property.

    A violation is the amount by which an inequality fails (0 when it holds).
    """
    rng = np.random.default_rng(seed)
    e = params.eps
    xs = np.concatenate(
        [
            rng.uniform(-3 * e, 3 * e, sample_count - sample_count // 4),
            rng.uniform(params.lo, params.hi, sample_count // 4) * rng.choice([-1, 1], sample_count // 4),
        ]
    )
    xs = xs[xs != 0.0]
    worst = {"YW1": 0.0, "YW2": 0.0, "YW3": 0.0, "YW4": 0.0, "YW5_local": 0.0, "YW5_global": 0.0}
    log_d = math.log(params.delta)
    cap = 2 * params.delta / (params.eps * log_d)
    for x in xs:
        ax = abs(x)
        d_pos = yw_phi_prime(ax, params)
        d = yw_phi_prime(x, params)
        worst["YW1"] = max(worst["YW1"], abs(d - math.copysign(1.0, x) * d_pos), abs(d + yw_phi_prime(-x, params)))
        worst["YW2"] = max(worst["YW2"], abs(d) - 1.0, -abs(d))
        worst["YW3"] = max(worst["YW3"], ax - params.eps - yw_phi(x, params))
        worst["YW4"] = max(worst["YW4"], d_pos / ax - params.delta / params.eps)
        second = yw_phi_second(ax, params)
        inside = params.lo <= ax <= params.hi
        worst["YW5_local"] = max(worst["YW5_local"], second - (2 / (ax * log_d) if inside else 0.0))
        worst["YW5_global"] = max(worst["YW5_global"], second - cap)
    mass_err = abs(psi_mass(params) - 1.0)
    report = {
        "delta": params.delta,
        "eps": params.eps,
        "taper": params.taper,
        "n_points": int(xs.size),
        "tolerance": tol,
        "psi_mass_error": mass_err,
        "psi_mass_pass": mass_err < 1e-6,
        "max_violation": {k: max(0.0, v) for k, v in worst.items()},
    }
    report["pass"] = {k: v < tol for k, v in report["max_violation"].items()}
    report["all_pass"] = report["psi_mass_pass"] and all(report["pass"].values())
    return report
