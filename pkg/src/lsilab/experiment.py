"""
Turns a validated `ExperimentConfig` into solver inputs and runs the solver.
"""

import logging
from typing import Union

import numpy as np
import pandas as pd

from .core import StateLattice, build_lattice, poisson_truncation_depth
from .cox import IntensitySpec
from .fixed_point import (
    CountingFpProblem,
    FpSolution,
    GeneralFpProblem,
    default_holder_limit,
    regularity_diagnostic,
    solve_all_levels,
    solve_system,
    solve_with_restarts,
)
from .models import (
    AffineStateIntensity,
    ConstantIntensity,
    ExperimentConfig,
    IntensityForm,
    ModelSection,
    SolverSection,
    TableIntensity,
    TimeSinusoidIntensity,
)
from .utils.files import table_from_frame

logger = logging.getLogger(__name__)

Problem = Union[CountingFpProblem, GeneralFpProblem]


def lattice_depth(cfg: ExperimentConfig) -> int:
    if cfg.solver.max_jumps == "auto":
        return poisson_truncation_depth(cfg.model.bounds, cfg.model.grid.horizon)
    return int(cfg.solver.max_jumps)


def build_intensity(model: ModelSection, lattice: StateLattice) -> IntensitySpec:
    """
    Tabulate λ on the lattice and grid. Closed forms are clipped to [L, U];
    a table must already lie inside the bounds.
    """
    bounds, grid = model.bounds, model.grid
    form: IntensityForm = model.intensity
    if isinstance(form, ConstantIntensity):
        return IntensitySpec.constant(lattice, grid, bounds, form.value)
    if isinstance(form, AffineStateIntensity):
        base, slope = form.base, form.slope
        return IntensitySpec.from_function(
            lattice,
            grid,
            bounds,
            lambda t, x: np.clip(
                np.full_like(t, base + slope * x), bounds.L, bounds.U
            ),
        )
    if isinstance(form, TimeSinusoidIntensity):
        base, amplitude, frequency = form.base, form.amplitude, form.frequency
        return IntensitySpec.from_function(
            lattice,
            grid,
            bounds,
            lambda t, x: np.clip(
                base + amplitude * np.sin(2.0 * np.pi * frequency * t),
                bounds.L,
                bounds.U,
            ),
        )
    if isinstance(form, TableIntensity):
        frame = pd.read_csv(form.resolved_path, comment="#")
        table = table_from_frame(frame, "lambda", lattice, grid)
        return IntensitySpec(lattice, grid, bounds, table)
    raise ValueError(f"unsupported intensity form: {form!r}")


def build_problem(cfg: ExperimentConfig) -> Problem:
    model, solver = cfg.model, cfg.solver
    K = lattice_depth(cfg)
    lattice = build_lattice(model.jumps, K)
    lam = build_intensity(model, lattice)
    eta_model = model.eta_model()
    logger.info(
        "%s problem: η=%s, K=%d, %d lattice states, %d cells",
        solver.mode,
        eta_model.kind,
        K,
        lattice.size,
        model.grid.n_steps,
    )
    if solver.mode == "counting":
        return CountingFpProblem(
            eta_model=eta_model,
            lam=lam,
            bounds=model.bounds,
            grid=model.grid,
            mc_paths=solver.mc_paths,
            max_level=K,
            seed=cfg.seed,
        )
    limit = solver.holder_limit
    if limit is None:
        limit = default_holder_limit(eta_model)
    regularity_diagnostic(eta_model, cfg.seed, limit=limit)
    return GeneralFpProblem(
        eta_model=eta_model,
        nu=model.jumps,
        lam=lam,
        lattice=lattice,
        grid=model.grid,
        mc_paths=solver.mc_paths,
        damping=solver.damping,
        seed=cfg.seed,
        word_cap=solver.word_cap,
    )


def solve(problem: Problem, solver: SolverSection) -> FpSolution:
    if isinstance(problem, CountingFpProblem):
        return solve_all_levels(problem, tol=solver.tol, max_iter=solver.max_iter)
    if solver.restarts:
        return solve_with_restarts(problem, tol=solver.tol, max_iter=solver.max_iter)
    return solve_system(problem, tol=solver.tol, max_iter=solver.max_iter)
