import math

import numpy as np
import pytest

from tamedem.coupling import IncrementRecorder, LevelFailed, sample_level, simulate_coupled
from tamedem.noise import ReplayStream, SeededStream, sample_stream
from tamedem.problems import get_problem
from tamedem.scheme import SchemeConfig, simulate_path


def test_still_problem_has_no_difference(still_problem):
    s = simulate_coupled(still_problem, 1e-2, SchemeConfig(0.5, 1.0), SeededStream(1))
    assert s.abs_diff == 0.0 and s.y_coarse == s.y_fine == 0.3
    lev = sample_level(still_problem, 1e-2, SchemeConfig(0.5, 1.0), 4, 0)
    assert lev.mean == 0.0 and lev.std == 0.0


@pytest.mark.parametrize("name", ["ex1", "ex3", "ex4"])
def test_equal_parameters_give_identical_legs(name):
    p = get_problem(name)
    s = simulate_coupled(p, 1e-3, SchemeConfig(0.5, 0.2, "10"), SeededStream(2), delta_fine=1e-3)
    assert s.y_coarse == s.y_fine and s.n_steps_coarse == s.n_steps_fine and s.abs_diff == 0.0


def test_fine_leg_takes_more_steps():
    s = simulate_coupled(get_problem("ex1"), 1e-3, SchemeConfig(0.5, 0.2, "10"), SeededStream(3))
    assert s.n_steps_fine > s.n_steps_coarse and math.isfinite(s.abs_diff)


@pytest.mark.parametrize("name", ["ex1", "ex3"])
def test_coarse_leg_matches_single_path(name):
    """Replaying the recorded coarse increments through the single-path integrator."""
    p = get_problem(name)
    cfg = SchemeConfig(1e-3, 0.3, "10", record_trajectory=True)
    rec = IncrementRecorder()
    s = simulate_coupled(p, 1e-3, cfg, SeededStream(5), recorder=rec)
    steps = rec.steps
    assert steps.shape[0] == s.n_steps_coarse
    z = steps[:, 1] / np.sqrt(steps[:, 0])
    out = simulate_path(p, cfg, ReplayStream(z))
    assert out.n_steps == s.n_steps_coarse
    np.testing.assert_allclose(np.diff(out.trajectory[:, 0]), steps[:, 0], rtol=1e-9, atol=1e-12)
    assert out.y_end == pytest.approx(s.y_coarse, rel=1e-9, abs=1e-12)


def test_level_estimate_and_duplicates():
    p = get_problem("ex1")
    cfg = SchemeConfig(0.5, 0.1, "10")
    lev = sample_level(p, 1e-3, cfg, 6, 11)
    assert lev.n_samples == 6 and lev.mean > 0 and lev.stderr == pytest.approx(lev.std / math.sqrt(6))
    dup = sample_level(p, 1e-3, cfg, 2, 11, stream_index=lambda i: 0)
    assert dup.stderr == 0.0 and dup.std == 0.0
    with pytest.raises(ValueError):
        sample_level(p, 1e-3, cfg, 1, 11)
    again = sample_level(p, 1e-3, cfg, 6, 11, workers=3)
    assert again == lev


def test_sample_stream_keys():
    p = get_problem("ex1")
    cfg = SchemeConfig(0.5, 0.05, "10")
    lev = sample_level(p, 1e-3, cfg, 3, 4, stream_key=(2,))
    direct = [simulate_coupled(p, 1e-3, cfg, sample_stream(4, i, (2,))).abs_diff for i in range(3)]
    assert lev.mean == pytest.approx(np.mean(direct), rel=1e-15)


def test_step_cap_fails_level():
    p = get_problem("ex1")
    with pytest.raises(LevelFailed) as e:
        sample_level(p, 1e-3, SchemeConfig(0.5, 1.0, max_steps=50), 3, 0)
    assert e.value.n_failed == 3
