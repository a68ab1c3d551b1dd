from .common import FpSolution, SampleSet, draw_samples
from .counting import (
    CountingFpProblem,
    LevelSolution,
    estimate_fg,
    solve_all_levels,
    solve_level,
)
from .general import (
    FrozenWordTimes,
    GeneralFpProblem,
    count_words,
    default_holder_limit,
    enumerate_words,
    estimate_fg_general,
    frozen_word_times,
    regularity_diagnostic,
    solve_system,
    solve_with_restarts,
    theta_xi_oracle,
)

__all__ = [
    "CountingFpProblem",
    "FpSolution",
    "FrozenWordTimes",
    "GeneralFpProblem",
    "LevelSolution",
    "SampleSet",
    "count_words",
    "default_holder_limit",
    "draw_samples",
    "enumerate_words",
    "estimate_fg",
    "estimate_fg_general",
    "frozen_word_times",
    "regularity_diagnostic",
    "solve_all_levels",
    "solve_level",
    "solve_system",
    "solve_with_restarts",
    "theta_xi_oracle",
]
