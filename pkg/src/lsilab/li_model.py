"""
Reference local intensity (LI) model: exact one-dimensional marginals from the
Kolmogorov forward equations on the truncated lattice.
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from .core import JumpDistribution, StateLattice, TimeGrid
from .cox import Ensemble, IntensitySpec, JumpPath
from .exceptions import InsufficientSamplesError, MassLeakError

logger = logging.getLogger(__name__)

# Largest rate·step allowed inside one Runge-Kutta substep.
MAX_RATE_STEP = 0.1
MIN_EXPECTED_COUNT = 5.0
MIN_PATHS = 100


@dataclass(frozen=True, eq=False)
class MarginalCurve:
    """Law of X_t at every grid node; `leak` is the mass lost to truncation."""

    grid: TimeGrid
    lattice: StateLattice
    pmf: np.ndarray
    leak: np.ndarray

    def at(self, t: float) -> np.ndarray:
        return self.pmf[self.grid.node_index(t)]

    def to_frame(self) -> pd.DataFrame:
        """Rows (t, state, prob) with states in increasing value order."""
        order = self.lattice.value_order()
        n_nodes, n_states = self.pmf.shape
        return pd.DataFrame(
            {
                "t": np.repeat(self.grid.nodes, n_states),
                "state": np.tile(self.lattice.states[order], n_nodes),
                "prob": self.pmf[:, order].ravel(),
            }
        )


def _transition_matrix(nu: JumpDistribution, lattice: StateLattice) -> np.ndarray:
    """M[x, y] = ν-probability of jumping from x to y inside the lattice."""
    matrix = np.zeros((lattice.size, lattice.size))
    for j, p in enumerate(nu.probs):
        targets = lattice.successors[:, j]
        inside = targets >= 0
        matrix[np.flatnonzero(inside), targets[inside]] += p
    return matrix


def forward_pmf(
    rate_table: np.ndarray,
    nu: JumpDistribution,
    lattice: StateLattice,
    grid: TimeGrid,
    initial: Union[np.ndarray, None] = None,
) -> np.ndarray:
    """
    Integrate dp/dt = (p·r)M - p·r with piecewise-constant per-state jump
    rates r (shape: states x cells) by classical RK4, substepping each cell
    so that r_max·h stays below `MAX_RATE_STEP`. Returns p at every node.
    """
    transitions = _transition_matrix(nu, lattice)
    p = np.zeros(lattice.size)
    if initial is None:
        p[lattice.locate(0.0)] = 1.0
    else:
        p[:] = initial
    pmf = np.empty((grid.n_steps + 1, lattice.size))
    pmf[0] = p

    def rhs(q: np.ndarray, rates: np.ndarray) -> np.ndarray:
        flow = q * rates
        return flow @ transitions - flow

    for i in range(grid.n_steps):
        rates = rate_table[:, i]
        substeps = max(1, math.ceil(float(rates.max()) * grid.step / MAX_RATE_STEP))
        h = grid.step / substeps
        for _ in range(substeps):
            k1 = rhs(p, rates)
            k2 = rhs(p + 0.5 * h * k1, rates)
            k3 = rhs(p + 0.5 * h * k2, rates)
            k4 = rhs(p + h * k3, rates)
            p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        pmf[i + 1] = p
    return pmf


def li_forward_marginals(
    lam: IntensitySpec,
    nu: JumpDistribution,
    lattice: StateLattice,
    grid: TimeGrid,
    leak_tolerance: float = 1e-6,
) -> MarginalCurve:
    """Marginals of the LI model with intensity λ(t, X_{t-}) and jump law ν."""
    if lam.grid != grid or lam.lattice.size != lattice.size:
        raise ValueError("λ must be tabulated on the given lattice and grid")
    pmf = forward_pmf(np.asarray(lam.table), nu, lattice, grid)
    pmf = np.where(pmf < 0.0, 0.0, pmf)
    leak = 1.0 - pmf.sum(axis=1)
    over = np.flatnonzero(leak > leak_tolerance)
    if over.size:
        first = int(over[0])
        raise MassLeakError(
            float(grid.nodes[first]), float(leak[first]), leak_tolerance
        )
    logger.debug("Forward marginals: terminal leak %.3g", leak[-1])
    return MarginalCurve(grid=grid, lattice=lattice, pmf=pmf, leak=leak)


def empirical_pmf(
    paths: Sequence[JumpPath], lattice: StateLattice, t: float
) -> Tuple[np.ndarray, int]:
    """Counts of X_t per lattice ordinal and the number of paths."""
    ordinals = np.fromiter((path.ordinal_at(t) for path in paths), dtype=np.int64)
    return np.bincount(ordinals, minlength=lattice.size).astype(float), len(ordinals)


def pooled_cells(
    expected: np.ndarray, minimum: float = MIN_EXPECTED_COUNT
) -> np.ndarray:
    """
    Group labels merging adjacent cells until each group expects `minimum`
    counts; a short last group joins its predecessor.
    """
    labels = np.zeros(expected.shape[0], dtype=np.int64)
    group, running = 0, 0.0
    for i, value in enumerate(expected):
        labels[i] = group
        running += value
        if running >= minimum and i < expected.shape[0] - 1:
            group += 1
            running = 0.0
    if group > 0 and running < minimum:
        labels[labels == group] = group - 1
    return labels


def marginal_distance(
    mc_paths: Union[Ensemble, Sequence[JumpPath]], curve: MarginalCurve, t: float
) -> Tuple[float, float]:
    """Total-variation distance and chi-square p-value of X_t against the curve."""
    paths = mc_paths.paths if isinstance(mc_paths, Ensemble) else mc_paths
    if len(paths) < MIN_PATHS:
        raise InsufficientSamplesError("usable paths", len(paths), MIN_PATHS)
    counts, n = empirical_pmf(paths, curve.lattice, t)
    reference = curve.at(t)
    tv = 0.5 * float(np.abs(counts / n - reference).sum())

    order = curve.lattice.value_order()
    expected = reference[order] / reference.sum() * n
    labels = pooled_cells(expected)
    observed_groups = np.bincount(labels, weights=counts[order])
    expected_groups = np.bincount(labels, weights=expected)
    if observed_groups.shape[0] < 2:
        return tv, 1.0
    expected_groups *= observed_groups.sum() / expected_groups.sum()
    _, p_value = stats.chisquare(observed_groups, expected_groups)
    return tv, float(p_value)
