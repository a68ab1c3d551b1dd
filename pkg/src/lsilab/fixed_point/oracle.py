"""
Reference fixed points that need no Monte Carlo.

When η is a finite mixture of deterministic paths, X given the branch is an
inhomogeneous Markov chain with rates c(t)·λ(t, x)/γ_x(t). The joint law of
(η, X) then follows from one forward solve per branch, and both f and g are
finite sums over branches.
"""

import logging
from typing import List, Sequence, Tuple

import numpy as np

from ..core import JumpDistribution, StateLattice, TimeGrid
from ..cox import GammaFamily, IntensitySpec
from ..eta import EtaModel
from ..exceptions import InsufficientMassError, NonConvergenceError
from ..li_model import forward_pmf
from .common import leverage_from_fg

logger = logging.getLogger(__name__)


def two_point_fg(
    values: Sequence[float],
    weights: Sequence[float],
    candidate: float,
    t: float,
    lam: float = 1.0,
) -> Tuple[float, float]:
    """
    f_0(t) and g_0(t) for η constant in time with a finite law, a constant
    intensity λ and a constant candidate leverage.
    """
    values = np.asarray(values, dtype=float)
    survival = np.asarray(weights, dtype=float) * np.exp(-values * lam * t / candidate)
    return float((values * survival).sum()), float(survival.sum())


def _branch_pmfs(
    branches: List[Tuple[float, np.ndarray]],
    lam: IntensitySpec,
    gamma_table: np.ndarray,
    nu: JumpDistribution,
    lattice: StateLattice,
    grid: TimeGrid,
) -> List[np.ndarray]:
    ratio = np.asarray(lam.table) / gamma_table
    return [
        forward_pmf(values[None, :] * ratio, nu, lattice, grid)
        for _, values in branches
    ]


def branch_fg(
    eta_model: EtaModel,
    lam: IntensitySpec,
    nu: JumpDistribution,
    gamma: GammaFamily,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    E[η_t 1{X_{t-} = x}] and P(X_{t-} = x) at the right node of every cell, for
    every lattice state, under the dynamics driven by `gamma`.
    """
    branches = eta_model.branches()
    pmfs = _branch_pmfs(
        branches, lam, np.asarray(gamma.table), nu, gamma.lattice, gamma.grid
    )
    f = np.zeros((gamma.lattice.size, gamma.grid.n_steps))
    g = np.zeros_like(f)
    for (weight, values), pmf in zip(branches, pmfs):
        occupancy = pmf[1:].T
        f += weight * values[None, :] * occupancy
        g += weight * occupancy
    return f, g


def branch_fixed_point(
    eta_model: EtaModel,
    lam: IntensitySpec,
    nu: JumpDistribution,
    lattice: StateLattice,
    grid: TimeGrid,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> GammaFamily:
    """
    Picard iteration of γ ← clamp(f/g) with f and g from the per-branch forward
    equations. States without mass copy their parent's leverage.
    """
    if not eta_model.is_finite_law:
        raise ValueError(f"{eta_model.kind} η has no finite law")
    bounds = eta_model.bounds
    gamma = GammaFamily.constant(lattice, grid, bounds, bounds.midpoint)
    trace: List[float] = []
    order = np.argsort(lattice.depth, kind="stable")
    for _ in range(max_iter):
        f, g = branch_fg(eta_model, lam, nu, gamma)
        table = np.empty_like(f)
        for ordinal in order:
            try:
                table[ordinal], _ = leverage_from_fg(
                    f[ordinal], g[ordinal], bounds, grid, float(lattice.states[ordinal])
                )
            except InsufficientMassError:
                parent = max(int(lattice.parent[ordinal]), 0)
                table[ordinal] = table[parent]
        residual = float(np.abs(table - gamma.table).max())
        trace.append(residual)
        gamma = GammaFamily(lattice, grid, bounds, table)
        if residual <= tol:
            logger.debug("branch oracle converged in %d iterations", len(trace))
            return gamma
    raise NonConvergenceError(
        f"branch oracle did not reach tol={tol:g} in {max_iter} iterations",
        trace,
        best_iterate=np.asarray(gamma.table),
    )
