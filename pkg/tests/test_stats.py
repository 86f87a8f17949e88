import math

import numpy as np
import pytest
from scipy import stats as sps

from tamedem.coupling import LevelEstimate
from tamedem.problems import get_problem
from tamedem.stats import (
    DegenerateDesignError,
    DegenerateLevelError,
    estimate_cost,
    estimate_rate,
    intercept_shift,
    ols_fit,
)


def exact_levels(alpha, c=0.3):
    def sampler(problem, dk, config, n, seed, stream_key=(), workers=None):
        k = stream_key[0]
        m = c * 2.0 ** (-k * alpha)
        return LevelEstimate(dk, n, m, 0.0, 0.0, 0, 1.0, 2.0)

    return sampler


def test_ols_against_linregress():
    rng = np.random.default_rng(0)
    x = rng.normal(size=12)
    y = 0.7 * x - 1.3 + rng.normal(scale=0.2, size=12)
    fit = ols_fit(list(zip(x, y)))
    ref = sps.linregress(x, y)
    assert fit.slope == pytest.approx(ref.slope, rel=1e-12)
    assert fit.intercept == pytest.approx(ref.intercept, rel=1e-12)
    assert fit.slope_stderr == pytest.approx(ref.stderr, rel=1e-10)
    assert fit.intercept_stderr == pytest.approx(ref.intercept_stderr, rel=1e-10)
    assert fit.r_squared == pytest.approx(ref.rvalue**2, rel=1e-12)
    q = sps.t.ppf(0.975, 10)
    assert fit.slope_ci95[1] - fit.slope == pytest.approx(q * ref.stderr, rel=1e-10)


def test_ols_small_sample_quantile():
    fit = ols_fit([(0, 0.0), (1, 1.1), (2, 1.9), (3, 3.2)])
    half = (fit.slope_ci95[1] - fit.slope_ci95[0]) / 2
    # two degrees of freedom: the t quantile is (2p - 1) / sqrt(2 p (1 - p))
    p = 0.975
    assert half / fit.slope_stderr == pytest.approx((2 * p - 1) / math.sqrt(2 * p * (1 - p)), rel=1e-9)


def test_ols_degenerate():
    with pytest.raises(DegenerateDesignError):
        ols_fit([(1, 1), (1, 2), (1, 3)])
    with pytest.raises(DegenerateDesignError):
        ols_fit([(1, 1), (2, 2)])


def test_ols_exact_line_has_zero_width():
    fit = ols_fit([(k, 2.0 - 0.5 * k) for k in range(5)])
    assert fit.slope == -0.5 and fit.slope_ci95 == (-0.5, -0.5) and fit.r_squared == 1.0


@pytest.mark.parametrize("alpha", [0.0, 1 / 6, 0.5])
def test_rate_recovers_stubbed_decay(alpha):
    exp = estimate_rate(get_problem("ex1"), 1e-3, 4, 10, 1.0, 0, level_sampler=exact_levels(alpha))
    assert abs(exp.rate - alpha) < 1e-12
    assert exp.fit.intercept == pytest.approx(math.log(0.3), abs=1e-12)
    lines = exp.csv().splitlines()
    assert lines[0] == "k,delta_coarse,delta_fine,n_samples,mean_abs_diff,stderr"
    assert len(lines) == 5 and lines[1].startswith("1,0.0005,0.00025,10,")


def test_rate_rejects_zero_level():
    with pytest.raises(DegenerateLevelError):
        estimate_rate(get_problem("ex1"), 1e-3, 3, 10, 1.0, 0, level_sampler=exact_levels(0.0, c=0.0))


def test_rate_sample_schedule():
    seen = []

    def sampler(problem, dk, config, n, seed, stream_key=(), workers=None):
        seen.append((n, stream_key, config.t_end, config.log_base))
        return exact_levels(0.5)(problem, dk, config, n, seed, stream_key)

    estimate_rate(get_problem("ex1"), 1e-3, 3, [5, 6, 7], 2.0, 9, log_base="10", level_sampler=sampler)
    assert seen == [(5, (1,), 2.0, "10"), (6, (2,), 2.0, "10"), (7, (3,), 2.0, "10")]
    with pytest.raises(ValueError):
        estimate_rate(get_problem("ex1"), 1e-3, 3, [5, 6], 1.0, 0, level_sampler=sampler)


def test_cost_recovers_inverse_delta():
    deltas = [1e-3, 5e-4, 2.5e-4, 1.25e-4]
    stub = lambda problem, cfg, n, seed, key: np.full(n, 7.0 / cfg.delta)
    exp = estimate_cost(get_problem("ex4"), deltas, 10, 1.0, 0, step_sampler=stub)
    assert abs(exp.exponent + 1) < 1e-12
    assert exp.csv().splitlines()[0] == "delta,n_samples,mean_steps,stderr"
    with pytest.raises(DegenerateDesignError):
        estimate_cost(get_problem("ex4"), [1e-3, 1e-3, 5e-4], 10, 1.0, 0, step_sampler=stub)


def test_intercept_shift_identical_levels():
    s = intercept_shift(get_problem("ex1"), 1e-3, 4, 10, 1.0, 5.0, 0, level_sampler=exact_levels(0.4))
    assert s.difference == 0.0


def test_rate_end_to_end_reproducible():
    p = get_problem("ex1")
    a = estimate_rate(p, 1e-2, 3, 4, 0.05, 3, log_base="10")
    b = estimate_rate(p, 1e-2, 3, 4, 0.05, 3, log_base="10", workers=2)
    assert a.csv() == b.csv() and a.fit == b.fit
    c = estimate_cost(p, [1e-2, 5e-3, 2.5e-3], 3, 0.05, 3)
    assert all(pt.mean_steps > 0 for pt in c.per_delta)
