"""
Level-by-level fixed point for counting processes (ν = δ₁).

For each level m the leverage γ_m solves γ_m = f_m/g_m with

    f_m(t) = E[η_t 1{τ_m < t} exp(-∫_{τ_m}^t η_s λ(s, m)/γ_m(s) ds)]

and g_m the same expectation without η_t. Given γ_0..γ_{m-1}, τ_m is fixed
per sample, so the map only involves γ_m and is solved by Picard iteration on
common random numbers. The expectations are evaluated at the right node of
every cell using the cell's η value, i.e. with the left limit η_{t-}.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import Bounds, GridFunction, JumpDistribution, StateLattice, TimeGrid
from ..cox import GammaFamily, IntensitySpec, cumulative_rates, first_passage
from ..cox import integrated_at
from ..eta import EtaModel
from ..exceptions import InsufficientMassError, NonConvergenceError
from .common import (
    FpSolution,
    SampleSet,
    check_sample_budget,
    contraction_factor,
    draw_samples,
    leverage_from_fg,
    weighted_residual,
)

logger = logging.getLogger(__name__)


def word_terms(
    tau: np.ndarray,
    eta: np.ndarray,
    intensity_ratio: np.ndarray,
    grid: TimeGrid,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-cell sums over samples of η·1{τ < t}·exp(-∫_τ^t η·ratio) and of the
    same without η, for t at the right nodes. Also returns the cumulative
    intensity and rate rows so callers can continue to the next jump time.
    """
    rates = eta * intensity_ratio[None, :]
    cum = cumulative_rates(rates, grid)
    at_tau = integrated_at(cum, rates, grid, tau)
    occupied = tau[:, None] < grid.right_nodes[None, :]
    exponent = np.where(occupied, cum[:, 1:] - at_tau[:, None], np.inf)
    survival = np.exp(-exponent)
    return (eta * survival).sum(axis=0), survival.sum(axis=0), cum, rates


@dataclass(eq=False)
class CountingFpProblem:
    """Problem data for the counting-process fixed point on levels 0..max_level."""

    eta_model: EtaModel
    lam: IntensitySpec
    bounds: Bounds
    grid: TimeGrid
    mc_paths: int
    max_level: int
    seed: int = 0
    weight_rate: Optional[float] = None
    strict_mass: bool = False
    _samples: Optional[SampleSet] = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        check_sample_budget(self.mc_paths)
        if self.max_level < 1:
            raise ValueError(f"max_level must be at least 1, got {self.max_level}")
        lattice = self.lam.lattice
        if lattice.atoms != (1.0,) or lattice.size != self.max_level + 1:
            raise ValueError(
                f"λ must be tabulated on the counting lattice {{0..{self.max_level}}}"
            )
        if self.eta_model.bounds != self.bounds or self.lam.bounds != self.bounds:
            raise ValueError("η, λ and the problem must share the same bounds")
        if self.eta_model.grid != self.grid or self.lam.grid != self.grid:
            raise ValueError("η, λ and the problem must share the same grid")

    @property
    def nu(self) -> JumpDistribution:
        return JumpDistribution.counting()

    @property
    def lattice(self) -> StateLattice:
        return self.lam.lattice

    @property
    def rate(self) -> float:
        """Weight a of the norm sup_t e^{-at}|f(t)|, 2·C(T) unless overridden."""
        if self.weight_rate is not None:
            return self.weight_rate
        return 2.0 * self.bounds.contraction_constant(self.grid.horizon)

    @property
    def samples(self) -> SampleSet:
        if self._samples is None:
            self._samples = draw_samples(
                self.eta_model, self.mc_paths, self.max_level + 1, self.seed
            )
        return self._samples

    def next_passage(
        self, level: int, tau: np.ndarray, gamma_row: np.ndarray
    ) -> np.ndarray:
        """τ_{level+1} per sample, given τ_level and the solved γ_level."""
        samples = self.samples
        rates = samples.eta * (self.lam.row(level) / gamma_row)[None, :]
        cum = cumulative_rates(rates, self.grid)
        return first_passage(cum, rates, self.grid, tau, samples.clocks[:, level])

    def level_passage_times(
        self, level: int, gamma_prior: Union[GammaFamily, Sequence[np.ndarray]]
    ) -> np.ndarray:
        """τ_level per sample from the leverage rows of the lower levels."""
        rows = _prior_rows(gamma_prior, level)
        tau = np.zeros(self.samples.size)
        for k in range(level):
            tau = self.next_passage(k, tau, rows[k])
        return tau


def _prior_rows(
    gamma_prior: Union[GammaFamily, Sequence[np.ndarray]], level: int
) -> List[np.ndarray]:
    if isinstance(gamma_prior, GammaFamily):
        return [gamma_prior.row(k) for k in range(level)]
    rows = [np.asarray(row, dtype=float) for row in gamma_prior]
    if len(rows) < level:
        raise ValueError(f"need leverage rows for levels 0..{level - 1}")
    return rows


def estimate_fg(
    level: int,
    gamma_prior: Union[GammaFamily, Sequence[np.ndarray]],
    candidate: GridFunction,
    samples: SampleSet,
    lam: IntensitySpec,
) -> Tuple[GridFunction, GridFunction]:
    """Monte Carlo f_m and g_m for a candidate γ_m on fixed samples."""
    grid = samples.grid
    rows = _prior_rows(gamma_prior, level)
    tau = np.zeros(samples.size)
    for k in range(level):
        rates = samples.eta * (lam.row(k) / rows[k])[None, :]
        cum = cumulative_rates(rates, grid)
        tau = first_passage(cum, rates, grid, tau, samples.clocks[:, k])
    f_sum, g_sum, _, _ = word_terms(
        tau, samples.eta, lam.row(level) / candidate.values, grid
    )
    return GridFunction(grid, f_sum / samples.size), GridFunction(
        grid, g_sum / samples.size
    )


@dataclass
class LevelSolution:
    gamma: GridFunction
    trace: np.ndarray
    iterations: int
    clamp_distance: float
    occupancy: np.ndarray


def _picard(
    problem: CountingFpProblem,
    level: int,
    tau: np.ndarray,
    tol: float,
    max_iter: int,
) -> LevelSolution:
    grid, bounds, samples = problem.grid, problem.bounds, problem.samples
    lam_row = problem.lam.row(level)
    current = np.full(grid.n_steps, bounds.midpoint)
    trace: List[Tuple[float, float]] = []
    best, best_residual = current, np.inf
    clamp = 0.0
    for _ in range(max_iter):
        f_sum, g_sum, _, _ = word_terms(tau, samples.eta, lam_row / current, grid)
        g = g_sum / samples.size
        updated, clamp = leverage_from_fg(
            f_sum / samples.size, g, bounds, grid, float(level)
        )
        sup, weighted = weighted_residual(updated - current, grid, problem.rate)
        trace.append((sup, weighted))
        logger.debug("level %d: residual %.3e (weighted %.3e)", level, sup, weighted)
        current = updated
        if sup < best_residual:
            best, best_residual = updated, sup
        if sup <= tol and weighted <= tol:
            return LevelSolution(
                gamma=GridFunction(grid, current),
                trace=np.asarray(trace),
                iterations=len(trace) - 1,
                clamp_distance=clamp,
                occupancy=g,
            )
    raise NonConvergenceError(
        f"level {level} did not reach tol={tol:g} in {max_iter} iterations "
        f"(last residual {trace[-1][0]:.3e})",
        [r for r, _ in trace],
        best_iterate=best,
        level=level,
    )


def solve_level(
    level: int,
    gamma_prior: Union[GammaFamily, Sequence[np.ndarray]],
    problem: CountingFpProblem,
    tol: float = 1e-4,
    max_iter: int = 60,
) -> LevelSolution:
    """
    Picard iteration γ ← clamp(f/g) for one level from γ ≡ (L+U)/2.

    Stops once both the sup residual and the weighted residual are below
    `tol`; `iterations` counts the updates made before that confirming pass.
    """
    tau = problem.level_passage_times(level, gamma_prior)
    return _picard(problem, level, tau, tol, max_iter)


def solve_all_levels(
    problem: CountingFpProblem, tol: float = 1e-4, max_iter: int = 60
) -> FpSolution:
    """
    Solve levels 0..K in order, each on the passage times of the previous ones.

    A level that no sample reaches before T takes the previous level's
    leverage and is listed in `unresolved_states`, unless the problem is
    strict about mass.
    """
    grid, samples = problem.grid, problem.samples
    n_levels = problem.max_level + 1
    table = np.empty((n_levels, grid.n_steps))
    occupancy = np.zeros((n_levels, grid.n_steps))
    residuals = np.zeros(n_levels)
    iterations = np.zeros(n_levels, dtype=np.int64)
    factors = np.zeros(n_levels)
    traces: Dict[int, np.ndarray] = {}
    unresolved: List[int] = []
    clamp = 0.0

    tau = np.zeros(samples.size)
    for level in range(n_levels):
        if level > 0:
            tau = problem.next_passage(level - 1, tau, table[level - 1])
        try:
            result = _picard(problem, level, tau, tol, max_iter)
        except InsufficientMassError:
            if level == 0 or problem.strict_mass:
                raise
            table[level] = table[level - 1]
            traces[level] = np.empty((0, 2))
            unresolved.append(level)
            continue
        except NonConvergenceError as error:
            table[level] = error.best_iterate
            table[level + 1 :] = table[level]
            error.solution = FpSolution(
                gamma=GammaFamily(problem.lattice, grid, problem.bounds, table),
                residuals=residuals,
                iterations=iterations,
                traces=traces,
                unresolved_states=tuple(unresolved),
            )
            error.solution.traces[level] = np.column_stack(
                (error.residual_trace, error.residual_trace)
            )
            raise
        table[level] = result.gamma.values
        occupancy[level] = result.occupancy
        residuals[level] = result.trace[-1, 0]
        iterations[level] = result.iterations
        factors[level] = contraction_factor(result.trace[:, 0])
        traces[level] = result.trace
        clamp = max(clamp, result.clamp_distance)
        logger.info(
            "level %d solved in %d iterations (residual %.2e, factor %.3f)",
            level,
            result.iterations,
            residuals[level],
            factors[level],
        )

    if unresolved:
        logger.warning(
            "levels %s are not reached before T by any of %d samples; "
            "their leverage copies the level below",
            unresolved,
            samples.size,
        )
    return FpSolution(
        gamma=GammaFamily(problem.lattice, grid, problem.bounds, table),
        residuals=residuals,
        iterations=iterations,
        traces=traces,
        clamp_distance=clamp,
        occupancy=occupancy,
        unresolved_states=tuple(unresolved),
        contraction_factors=factors,
        mc_paths=problem.mc_paths,
    )
