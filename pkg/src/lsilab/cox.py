"""
Cox construction of LSI jump paths.

A path at state x accumulates the intensity η_s·λ(s, x)/γ_x(s). Within a grid
cell that integrand is constant, so the integrated intensity is piecewise
linear and the k-th jump time, the first time it reaches the clock E_k, is
found in closed form. The passage helpers below are vectorized over rows so
the fixed-point solvers can run the same inversion on whole sample sets.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .core import (
    SIMULATION_STREAM,
    Bounds,
    GridFunction,
    JumpDistribution,
    RngStream,
    StateLattice,
    Substream,
    TimeGrid,
)
from .eta import EtaModel, EtaPath, sample_eta
from .exceptions import LatticeExitError

logger = logging.getLogger(__name__)


def cumulative_rates(rates: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Integrated intensity at every node, row-wise, starting from 0."""
    rates = np.atleast_2d(rates)
    cum = np.zeros((rates.shape[0], rates.shape[1] + 1))
    np.cumsum(rates * grid.step, axis=1, out=cum[:, 1:])
    return cum


def integrated_at(
    cum: np.ndarray, rates: np.ndarray, grid: TimeGrid, times: np.ndarray
) -> np.ndarray:
    """Row-wise integrated intensity at `times` (finite entries only)."""
    times = np.asarray(times, dtype=float)
    finite = np.isfinite(times)
    safe = np.where(finite, times, 0.0)
    cells = grid.cells(safe)
    rows = np.arange(cum.shape[0])
    value = cum[rows, cells] + (safe - cells * grid.step) * rates[rows, cells]
    return np.where(finite, value, np.inf)


def first_passage(
    cum: np.ndarray,
    rates: np.ndarray,
    grid: TimeGrid,
    start: np.ndarray,
    increments: np.ndarray,
    horizon: Optional[float] = None,
) -> np.ndarray:
    """
    Row-wise first time after `start` at which the integrated intensity has
    grown by `increments`; inf when that happens after the horizon or when
    `start` itself is inf.
    """
    horizon = grid.horizon if horizon is None else horizon
    start = np.asarray(start, dtype=float)
    target = integrated_at(cum, rates, grid, start) + increments
    # First node whose cumulative value reaches the target.
    reached_node = (cum < target[:, None]).sum(axis=1)
    cell = np.clip(reached_node - 1, 0, grid.n_steps - 1)
    rows = np.arange(cum.shape[0])
    with np.errstate(invalid="ignore"):
        tau = cell * grid.step + (target - cum[rows, cell]) / rates[rows, cell]
    tau = np.maximum(tau, np.where(np.isfinite(start), start, 0.0))
    ok = np.isfinite(target) & (reached_node <= grid.n_steps) & (tau <= horizon)
    return np.where(ok, tau, np.inf)


@dataclass(frozen=True, eq=False)
class _StateTable:
    lattice: StateLattice
    grid: TimeGrid
    bounds: Bounds
    table: np.ndarray

    def __post_init__(self) -> None:
        table = np.array(self.table, dtype=float, copy=True)
        expected = (self.lattice.size, self.grid.n_steps)
        if table.shape != expected:
            raise ValueError(f"expected a {expected} table, got {table.shape}")
        if not self.bounds.contains(table):
            raise ValueError(
                f"{type(self).__name__} leaves [{self.bounds.L}, {self.bounds.U}]: "
                f"range [{table.min():.6g}, {table.max():.6g}]"
            )
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def __getitem__(self, state: float) -> GridFunction:
        return GridFunction(self.grid, self.table[self.lattice.locate(state)])

    def row(self, ordinal: int) -> np.ndarray:
        return self.table[ordinal]

    @classmethod
    def constant(
        cls, lattice: StateLattice, grid: TimeGrid, bounds: Bounds, value: float
    ):
        return cls(lattice, grid, bounds, np.full((lattice.size, grid.n_steps), value))

    @classmethod
    def from_function(
        cls,
        lattice: StateLattice,
        grid: TimeGrid,
        bounds: Bounds,
        fn: Callable[[np.ndarray, float], np.ndarray],
    ):
        """Tabulate fn(left nodes, state) for every lattice state."""
        nodes = grid.left_nodes
        table = np.stack(
            [np.broadcast_to(fn(nodes, float(x)), nodes.shape) for x in lattice.states]
        )
        return cls(lattice, grid, bounds, table)


class IntensitySpec(_StateTable):
    """Local intensity λ(t, x), one grid function per lattice state."""


class GammaFamily(_StateTable):
    """Leverage functions γ_x(t), one grid function per lattice state."""

    def with_row(self, ordinal: int, values: np.ndarray) -> "GammaFamily":
        table = np.array(self.table, copy=True)
        table[ordinal] = values
        return GammaFamily(self.lattice, self.grid, self.bounds, table)


@dataclass(frozen=True, eq=False)
class JumpPath:
    """
    Realized jumps on [0, horizon].

    `ordinals` lists the visited lattice states, starting with the ordinal of
    0, so `ordinals[k]` is the state between τ_k and τ_{k+1}. `clocks` holds
    every exponential consumed, including the last one, which never rang.
    """

    times: np.ndarray
    sizes: np.ndarray
    ordinals: np.ndarray
    clocks: np.ndarray
    horizon: float
    lattice: StateLattice = field(repr=False)

    def __post_init__(self) -> None:
        for name in ("times", "sizes", "ordinals", "clocks"):
            array = np.array(getattr(self, name), copy=True)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if len(self.ordinals) != len(self.times) + 1:
            raise ValueError("need one more visited state than jump times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("jump times must be strictly increasing")

    @property
    def n_jumps(self) -> int:
        return int(self.times.shape[0])

    @property
    def states(self) -> np.ndarray:
        return self.lattice.states[self.ordinals]

    @property
    def state_before(self) -> np.ndarray:
        """X_{τ_k-} for every jump."""
        return self.states[:-1]

    @property
    def state_after(self) -> np.ndarray:
        return self.states[1:]

    def ordinal_before(self, t: float) -> int:
        """Ordinal of X_{t-}."""
        return int(self.ordinals[np.searchsorted(self.times, t, side="left")])

    def ordinal_at(self, t: float) -> int:
        return int(self.ordinals[np.searchsorted(self.times, t, side="right")])

    def value_at(self, t: float) -> float:
        return float(self.lattice.states[self.ordinal_at(t)])

    def value_before(self, t: float) -> float:
        return float(self.lattice.states[self.ordinal_before(t)])


class _RateCache:
    """Per-state intensity rows and their cumulative integrals along one η path."""

    def __init__(
        self, eta: EtaPath, gamma: GammaFamily, lam: IntensitySpec
    ) -> None:
        self.eta, self.gamma, self.lam = eta, gamma, lam
        self._cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    def __call__(self, ordinal: int) -> Tuple[np.ndarray, np.ndarray]:
        if ordinal not in self._cache:
            rates = self.eta.values * self.lam.row(ordinal) / self.gamma.row(ordinal)
            rates = rates[None, :]
            self._cache[ordinal] = (cumulative_rates(rates, self.eta.grid), rates)
        return self._cache[ordinal]

    def integral(self, ordinal: int, a: float, b: float) -> float:
        cum, rates = self(ordinal)
        ends = integrated_at(cum, rates, self.eta.grid, np.array([a, b]))
        return float(ends[1] - ends[0])


def _check_consistent(eta: EtaPath, gamma: GammaFamily, lam: IntensitySpec) -> None:
    if eta.grid != gamma.grid or eta.grid != lam.grid:
        raise ValueError("η, γ and λ must live on the same time grid")
    if gamma.lattice is not lam.lattice and not np.array_equal(
        gamma.lattice.states, lam.lattice.states
    ):
        raise ValueError("γ and λ must be tabulated on the same lattice")


def cox_simulate(
    eta: EtaPath,
    gamma: GammaFamily,
    lam: IntensitySpec,
    nu: JumpDistribution,
    rng: RngStream,
    T: Optional[float] = None,
    clocks: Sequence[float] = (),
    jumps: Sequence[float] = (),
) -> JumpPath:
    """
    One LSI path by exact inversion of the integrated intensity.

    Forced `clocks` and `jumps` (atom values) are consumed first; further
    draws come lazily, in path order, from the clock and jump substreams.
    Raises `LatticeExitError` with the partial path when a jump leaves the
    lattice.
    """
    _check_consistent(eta, gamma, lam)
    grid, lattice = eta.grid, gamma.lattice
    horizon = grid.horizon if T is None else float(T)
    if not 0.0 < horizon <= grid.horizon * (1.0 + 1e-12):
        raise ValueError(f"T={horizon} must lie in (0, {grid.horizon}]")

    clock_gen = rng.generator(Substream.CLOCKS)
    jump_gen = rng.generator(Substream.JUMPS)
    rate_rows = _RateCache(eta, gamma, lam)

    times: List[float] = []
    sizes: List[float] = []
    ordinals: List[int] = [lattice.locate(0.0)]
    used: List[float] = []
    t = 0.0
    while True:
        k = len(times)
        if k < len(clocks):
            clock = float(clocks[k])
        else:
            clock = -math.log1p(-clock_gen.random())
        used.append(clock)
        cum, rates = rate_rows(ordinals[-1])
        passage = first_passage(
            cum, rates, grid, np.array([t]), np.array([clock]), horizon
        )
        tau = float(passage[0])
        if not math.isfinite(tau):
            break
        if k < len(jumps):
            atom = nu.atom_index(float(jumps[k]))
        else:
            atom = nu.sample_index(jump_gen.random())
        successor = int(lattice.successors[ordinals[-1], atom])
        times.append(tau)
        sizes.append(nu.atoms[atom])
        if successor < 0:
            partial = JumpPath(
                np.asarray(times[:-1]),
                np.asarray(sizes[:-1]),
                np.asarray(ordinals),
                np.asarray(used),
                horizon,
                lattice,
            )
            raise LatticeExitError(
                f"jump {k + 1} at t={tau:.6g} leaves the lattice from state "
                f"{lattice.states[ordinals[-1]]}",
                partial,
            )
        ordinals.append(successor)
        t = tau

    return JumpPath(
        np.asarray(times, dtype=float),
        np.asarray(sizes, dtype=float),
        np.asarray(ordinals, dtype=np.int64),
        np.asarray(used, dtype=float),
        horizon,
        lattice,
    )


def _segments(path: JumpPath) -> List[Tuple[int, float, float]]:
    """(ordinal, start, end) for every inter-jump segment up to the horizon."""
    bounds = np.concatenate(([0.0], path.times, [path.horizon]))
    return [
        (int(path.ordinals[k]), float(bounds[k]), float(bounds[k + 1]))
        for k in range(len(path.ordinals))
    ]


def integrated_intensity(
    path: JumpPath,
    eta: EtaPath,
    gamma: GammaFamily,
    lam: IntensitySpec,
    a: float,
    b: float,
) -> float:
    """∫_a^b η_s λ(s, X_{s-})/γ_{X_{s-}}(s) ds along the realized path."""
    if not 0.0 <= a <= b <= eta.grid.horizon * (1.0 + 1e-12):
        raise ValueError(f"need 0 <= a <= b <= T, got a={a}, b={b}")
    rate_rows = _RateCache(eta, gamma, lam)
    total = 0.0
    for ordinal, start, end in _segments(path):
        lo, hi = max(start, a), min(end, b)
        if hi > lo:
            total += rate_rows.integral(ordinal, lo, hi)
    return total


def compensator_at(
    path: JumpPath,
    eta: EtaPath,
    gamma: GammaFamily,
    lam: IntensitySpec,
    times: Sequence[float],
) -> np.ndarray:
    """Integrated intensity from 0 to each of `times` along the path."""
    rate_rows = _RateCache(eta, gamma, lam)
    segments = _segments(path)
    out = np.zeros(len(times))
    for i, t in enumerate(times):
        for ordinal, start, end in segments:
            if start >= t:
                break
            out[i] += rate_rows.integral(ordinal, start, min(end, t))
    return out


def extract_clocks(
    path: JumpPath, eta: EtaPath, gamma: GammaFamily, lam: IntensitySpec
) -> np.ndarray:
    """(E_k, J_k) rows for every completed inter-jump interval."""
    rate_rows = _RateCache(eta, gamma, lam)
    previous = np.concatenate(([0.0], path.times[:-1]))
    increments = [
        rate_rows.integral(int(path.ordinals[k]), float(previous[k]), float(tau))
        for k, tau in enumerate(path.times)
    ]
    return np.column_stack(
        (np.asarray(increments, dtype=float), path.sizes.astype(float))
    ).reshape(-1, 2)


def interval_budgets(
    path: JumpPath, eta: EtaPath, gamma: GammaFamily, lam: IntensitySpec
) -> np.ndarray:
    """
    Integrated intensity from τ_{k-1} to the horizon at state X_{τ_{k-1}}, for
    every interval the path starts (completed ones plus the censored last one).
    """
    rate_rows = _RateCache(eta, gamma, lam)
    starts = np.concatenate(([0.0], path.times))
    return np.asarray(
        [
            rate_rows.integral(int(ordinal), float(start), path.horizon)
            for ordinal, start in zip(path.ordinals, starts)
        ]
    )


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Simulated LSI paths with the η paths that drove them, ordered by id."""

    paths: Tuple[JumpPath, ...]
    etas: Tuple[EtaPath, ...]
    path_ids: np.ndarray
    exited: int
    requested: int

    @property
    def exit_rate(self) -> float:
        return self.exited / self.requested if self.requested else 0.0

    def __len__(self) -> int:
        return len(self.paths)


def _simulate_chunk(
    ids: range,
    eta_model: EtaModel,
    gamma: GammaFamily,
    lam: IntensitySpec,
    nu: JumpDistribution,
    seed: int,
    stream_base: int,
) -> List[Tuple[int, EtaPath, Optional[JumpPath]]]:
    out = []
    for path_id in ids:
        rng = RngStream.for_path(seed, stream_base, path_id)
        eta = sample_eta(eta_model, rng)
        try:
            path: Optional[JumpPath] = cox_simulate(eta, gamma, lam, nu, rng)
        except LatticeExitError:
            path = None
        out.append((path_id, eta, path))
    return out


def simulate_paths(
    eta_model: EtaModel,
    gamma: GammaFamily,
    lam: IntensitySpec,
    nu: JumpDistribution,
    n_paths: int,
    seed: int,
    stream_base: int = SIMULATION_STREAM,
    threads: int = 1,
    chunk_size: int = 2048,
) -> Ensemble:
    """
    Simulate `n_paths` independent LSI paths.

    Path `i` always uses stream `stream_base + i`, and chunks are gathered in
    id order, so the ensemble is identical for every thread count. Paths that
    leave the lattice are dropped and counted in `exited`.
    """
    chunks = [
        range(start, min(start + chunk_size, n_paths))
        for start in range(0, n_paths, chunk_size)
    ]
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as executor:
        results = executor.map(
            lambda ids: _simulate_chunk(
                ids, eta_model, gamma, lam, nu, seed, stream_base
            ),
            chunks,
        )
        rows = [row for chunk in results for row in chunk]

    kept = [(i, eta, path) for i, eta, path in rows if path is not None]
    exited = len(rows) - len(kept)
    if exited:
        logger.warning(
            "%d of %d paths left the lattice and were discarded", exited, n_paths
        )
    logger.info("Simulated %d paths (%d threads)", n_paths, threads)
    return Ensemble(
        paths=tuple(path for _, _, path in kept),
        etas=tuple(eta for _, eta, _ in kept),
        path_ids=np.asarray([i for i, _, _ in kept], dtype=np.int64),
        exited=exited,
        requested=n_paths,
    )


def paths_to_frame(ensemble: Ensemble) -> pd.DataFrame:
    """One row per jump: path_id, k, tau, jump, state_after."""
    frames = [
        pd.DataFrame(
            {
                "path_id": path_id,
                "k": np.arange(1, path.n_jumps + 1),
                "tau": path.times,
                "jump": path.sizes,
                "state_after": path.state_after,
            }
        )
        for path_id, path in zip(ensemble.path_ids, ensemble.paths)
        if path.n_jumps
    ]
    if not frames:
        return pd.DataFrame(columns=["path_id", "k", "tau", "jump", "state_after"])
    return pd.concat(frames, ignore_index=True)
