"""Sample sets, leverage updates and the solution record shared by both solvers."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core import SOLVER_STREAM, Bounds, RngStream, Substream, TimeGrid
from ..cox import GammaFamily
from ..eta import EtaModel, sample_eta
from ..exceptions import InsufficientMassError

logger = logging.getLogger(__name__)

MIN_MC_PATHS = 1000


@dataclass(frozen=True, eq=False)
class SampleSet:
    """
    Common random numbers for a fixed-point solve: one η path and a row of
    exponential clocks per sample. Both stay fixed across iterations.
    """

    grid: TimeGrid
    eta: np.ndarray
    clocks: np.ndarray
    drivers: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return int(self.eta.shape[0])


def draw_samples(
    eta_model: EtaModel,
    n_samples: int,
    n_clocks: int,
    seed: int,
    stream_base: int = SOLVER_STREAM,
) -> SampleSet:
    """Sample `n_samples` η paths with `n_clocks` Exp(1) clocks each."""
    eta = np.empty((n_samples, eta_model.grid.n_steps))
    clocks = np.empty((n_samples, n_clocks))
    drivers = np.full(n_samples, np.nan)
    for s in range(n_samples):
        rng = RngStream.for_path(seed, stream_base, s)
        path = sample_eta(eta_model, rng)
        eta[s] = path.values
        clocks[s] = rng.exponentials(Substream.CLOCKS, n_clocks)
        if path.driver is not None:
            drivers[s] = path.driver
    for array in (eta, clocks, drivers):
        array.setflags(write=False)
    return SampleSet(grid=eta_model.grid, eta=eta, clocks=clocks, drivers=drivers)


def weighted_residual(
    diff: np.ndarray, grid: TimeGrid, weight_rate: float
) -> Tuple[float, float]:
    """Plain sup and sup_t e^{-a t}|diff(t)| over the last axis."""
    weights = np.exp(-weight_rate * grid.left_nodes)
    diff = np.abs(diff)
    return float(diff.max()), float((diff * weights).max())


def leverage_from_fg(
    f: np.ndarray,
    g: np.ndarray,
    bounds: Bounds,
    grid: TimeGrid,
    state: float,
) -> Tuple[np.ndarray, float]:
    """
    Φ = f/g clamped to [L, U], and the largest distance the clamp moved it.

    Cells before the first one with positive mass take the first
    well-estimated value. Raises `InsufficientMassError` when no cell has mass
    or when the mass vanishes again after appearing.
    """
    positive = g > 0.0
    if not positive.any():
        raise InsufficientMassError(state, float(grid.horizon))
    first = int(np.argmax(positive))
    gaps = np.flatnonzero(~positive[first:])
    if gaps.size:
        raise InsufficientMassError(state, float(grid.right_nodes[first + gaps[0]]))
    ratio = np.empty_like(f)
    ratio[first:] = f[first:] / g[first:]
    ratio[:first] = ratio[first]
    clamped = np.clip(ratio, bounds.L, bounds.U)
    return clamped, float(np.abs(ratio - clamped).max())


def contraction_factor(trace: Sequence[float], floor: float = 1e-13) -> float:
    """Geometric mean of the last (up to three) successive residual ratios."""
    values = [r for r in trace if r > floor]
    if len(values) < 2:
        return 0.0
    ratios = np.asarray(values[1:]) / np.asarray(values[:-1])
    tail = ratios[-3:]
    return float(np.exp(np.mean(np.log(tail))))


@dataclass
class FpSolution:
    """
    A solved leverage family with its convergence record.

    `traces[ordinal]` holds (sup residual, weighted residual) per iteration;
    `occupancy[ordinal, i]` is the estimated P(X_{t_{i+1}-} = x), used for
    standard errors by the consistency check.
    """

    gamma: GammaFamily
    residuals: np.ndarray
    iterations: np.ndarray
    traces: Dict[int, np.ndarray] = field(default_factory=dict)
    clamp_distance: float = 0.0
    occupancy: Optional[np.ndarray] = None
    unresolved_states: Tuple[int, ...] = ()
    contraction_factors: Optional[np.ndarray] = None
    mc_paths: int = 0
    word_stats: Optional[pd.DataFrame] = None
    restart_disagreement: Optional[float] = None

    @classmethod
    def from_gamma(cls, gamma: GammaFamily) -> "FpSolution":
        """Wrap a leverage family loaded from disk, without solver history."""
        n_states = gamma.lattice.size
        return cls(
            gamma=gamma,
            residuals=np.zeros(n_states),
            iterations=np.zeros(n_states, dtype=np.int64),
        )

    def trace_frame(self) -> pd.DataFrame:
        """Rows (state, iteration, residual, weighted_residual)."""
        states = self.gamma.lattice.states
        frames = [
            pd.DataFrame(
                {
                    "state": states[ordinal],
                    "iteration": np.arange(1, trace.shape[0] + 1),
                    "residual": trace[:, 0],
                    "weighted_residual": trace[:, 1],
                }
            )
            for ordinal, trace in sorted(self.traces.items())
            if trace.size
        ]
        if not frames:
            return pd.DataFrame(
                columns=["state", "iteration", "residual", "weighted_residual"]
            )
        return pd.concat(frames, ignore_index=True)


def check_sample_budget(mc_paths: int) -> None:
    if mc_paths < MIN_MC_PATHS:
        raise ValueError(f"mc_paths must be at least {MIN_MC_PATHS}, got {mc_paths}")
