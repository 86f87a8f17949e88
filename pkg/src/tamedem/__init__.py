"""Tamed-adaptive Euler-Maruyama simulation for scalar SDEs with discontinuous drift."""

from .coupling import CoupledSample, IncrementRecorder, LevelEstimate, sample_level, simulate_coupled
from .noise import ReplayStream, SeededStream, ZeroStream, sample_stream
from .problems import BUILTIN_NAMES, SdeProblem, UnknownProblemError, get_problem
from .scheme import (
    SchemeConfig,
    StepCapExceeded,
    empirical_moment,
    increment_gap,
    sigma_tamed,
    simulate_path,
    simulate_paths,
    step_size,
    validate_delta,
)
from .stats import estimate_cost, estimate_rate, intercept_shift, ols_fit

__version__ = "0.1.0"
