"""
Shared numerical types: intensity bounds, uniform time grids, piecewise-constant
grid functions, discrete jump laws, reachable-state lattices and counter-based
random streams.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

logger = logging.getLogger(__name__)

# Lattice states built from rational atoms are compared exactly; anything else
# is merged when two sums are closer than this.
STATE_TOLERANCE = 1e-12
_MAX_DENOMINATOR = 10**6


class Bounds(BaseModel):
    """Lower and upper bounds shared by η, λ and every leverage function."""

    model_config = ConfigDict(frozen=True)

    L: float = Field(..., gt=0, description="Lower intensity bound.")
    U: float = Field(..., gt=0, description="Upper intensity bound.")

    @model_validator(mode="after")
    def _check_order(self) -> "Bounds":
        if not self.L < self.U:
            raise ValueError(f"bounds require 0 < L < U, got L={self.L}, U={self.U}")
        return self

    @property
    def rate_floor(self) -> float:
        """Smallest possible LSI intensity, L²/U."""
        return self.L**2 / self.U

    @property
    def rate_ceiling(self) -> float:
        """Largest possible LSI intensity, U²/L."""
        return self.U**2 / self.L

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.L + self.U)

    def contraction_constant(self, horizon: float) -> float:
        """C(T) = 2U³exp((U²/L)T)/L², the Lipschitz constant of the level map."""
        with np.errstate(over="ignore"):
            growth = float(np.exp(self.rate_ceiling * horizon))
        return 2.0 * self.U**3 * growth / self.L**2

    def contains(self, values: np.ndarray, atol: float = STATE_TOLERANCE) -> bool:
        values = np.asarray(values, dtype=float)
        return bool(
            np.all(values >= self.L - atol) and np.all(values <= self.U + atol)
        )


class TimeGrid(BaseModel):
    """Uniform grid t_i = i·step on [0, horizon]."""

    model_config = ConfigDict(frozen=True)

    horizon: float = Field(..., gt=0, description="Final time T.")
    n_steps: int = Field(..., ge=1, description="Number of cells.")

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1, dtype=float) * self.step

    @property
    def left_nodes(self) -> np.ndarray:
        return self.nodes[:-1]

    @property
    def right_nodes(self) -> np.ndarray:
        return self.nodes[1:]

    def _position(self, t: float) -> float:
        position = t / self.step
        nearest = round(position)
        if abs(position - nearest) < 1e-9:
            return float(nearest)
        return position

    def _check_time(self, t: float) -> None:
        if not (0.0 <= t <= self.horizon * (1.0 + 1e-12)):
            raise ValueError(f"t={t} lies outside [0, {self.horizon}]")

    def cell_of(self, t: float) -> int:
        """Index i with t in [t_i, t_{i+1}); t = T belongs to the last cell."""
        self._check_time(t)
        return min(int(math.floor(self._position(t))), self.n_steps - 1)

    def left_cell(self, t: float) -> int:
        """Index of the cell that ends at or contains t from the left."""
        self._check_time(t)
        return min(max(int(math.ceil(self._position(t))) - 1, 0), self.n_steps - 1)

    def cells(self, times: np.ndarray) -> np.ndarray:
        """Vectorized `cell_of` for times already known to lie in [0, T]."""
        position = np.asarray(times, dtype=float) / self.step
        nearest = np.round(position)
        position = np.where(np.abs(position - nearest) < 1e-9, nearest, position)
        return np.clip(np.floor(position).astype(np.int64), 0, self.n_steps - 1)

    def is_node(self, t: float) -> bool:
        position = t / self.step
        return abs(position - round(position)) < 1e-9 and 0 <= round(position) <= (
            self.n_steps
        )

    def node_index(self, t: float) -> int:
        if not self.is_node(t):
            raise ValueError(f"t={t} is not a node of a grid with step {self.step}")
        return int(round(t / self.step))


def _readonly(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-constant function, one value per cell [t_i, t_{i+1})."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _readonly(self.values)
        if values.shape != (self.grid.n_steps,):
            raise ValueError(
                f"expected {self.grid.n_steps} values, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "GridFunction":
        return cls(grid, np.full(grid.n_steps, float(value)))

    def __call__(self, t: float) -> float:
        return eval_grid_function(self, t)

    def cumulative(self) -> np.ndarray:
        """∫_0^{t_i} f ds at every node (exact for step functions)."""
        return np.concatenate(([0.0], np.cumsum(self.values * self.grid.step)))

    def integral(self, a: float, b: float) -> float:
        if a > b:
            raise ValueError(f"integration bounds out of order: a={a} > b={b}")
        cum = self.cumulative()
        return _integrate_to(cum, self.values, self.grid, b) - _integrate_to(
            cum, self.values, self.grid, a
        )

    def within(self, bounds: Bounds) -> bool:
        return bounds.contains(self.values)


def _integrate_to(
    cum: np.ndarray, rates: np.ndarray, grid: TimeGrid, t: float
) -> float:
    i = grid.cell_of(t)
    return float(cum[i] + (t - i * grid.step) * rates[i])


def eval_grid_function(f: GridFunction, t: float) -> float:
    """Value on the cell containing t; boundaries belong to the right cell."""
    return float(f.values[f.grid.cell_of(t)])


class JumpDistribution(BaseModel):
    """Discrete jump-size law ν with finite support."""

    model_config = ConfigDict(frozen=True)

    atoms: Tuple[float, ...] = Field(..., description="Distinct nonzero jump sizes.")
    probs: Tuple[float, ...] = Field(..., description="Probability of each atom.")

    @field_validator("atoms")
    @classmethod
    def _check_atoms(cls, atoms: Tuple[float, ...]) -> Tuple[float, ...]:
        if not atoms:
            raise ValueError("jump distribution needs at least one atom")
        if any(a == 0.0 or not math.isfinite(a) for a in atoms):
            raise ValueError("atoms must be finite and nonzero")
        if len(set(atoms)) != len(atoms):
            raise ValueError(f"atoms must be distinct, got {atoms}")
        return atoms

    @model_validator(mode="after")
    def _check_probs(self) -> "JumpDistribution":
        if len(self.probs) != len(self.atoms):
            raise ValueError(
                f"{len(self.atoms)} atoms but {len(self.probs)} probabilities"
            )
        if any(p <= 0.0 for p in self.probs):
            raise ValueError("probabilities must be positive")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        return self

    @classmethod
    def counting(cls) -> "JumpDistribution":
        """ν = δ₁."""
        return cls(atoms=(1.0,), probs=(1.0,))

    @property
    def is_counting(self) -> bool:
        return self.atoms == (1.0,)

    @property
    def mean(self) -> float:
        return math.fsum(a * p for a, p in zip(self.atoms, self.probs))

    @property
    def atom_array(self) -> np.ndarray:
        return np.asarray(self.atoms, dtype=float)

    @property
    def prob_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def atom_index(self, atom: float) -> int:
        for j, a in enumerate(self.atoms):
            if abs(a - atom) <= STATE_TOLERANCE:
                return j
        raise ValueError(f"{atom} is not an atom of {self.atoms}")

    def sample_index(self, u: float) -> int:
        """Atom index drawn by inverting the CDF at a uniform u."""
        cdf = np.cumsum(self.probs)
        return int(min(np.searchsorted(cdf, u, side="right"), len(self.atoms) - 1))


@dataclass(frozen=True, eq=False)
class StateLattice:
    """
    Truncated enumeration of the finite sums of the atoms of ν.

    `states[0]` is always 0; the remaining states follow in increasing order.
    `successors[i, j]` is the ordinal of states[i] + atoms[j], or -1 when that
    sum lies outside the lattice.
    """

    states: np.ndarray
    atoms: Tuple[float, ...]
    max_jumps: int
    successors: np.ndarray
    depth: np.ndarray
    parent: np.ndarray
    index: Dict[float, int] = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.states.shape[0])

    def locate(self, x: float, tol: float = 1e-9) -> int:
        """Ordinal of the state within `tol` of x."""
        ordinal = self.index.get(float(x))
        if ordinal is not None:
            return ordinal
        distance = np.abs(self.states - x)
        best = int(np.argmin(distance))
        if distance[best] > tol:
            raise KeyError(f"state {x} is not in the lattice")
        return best

    def contains(self, x: float, tol: float = 1e-9) -> bool:
        try:
            self.locate(x, tol)
        except KeyError:
            return False
        return True

    def value_order(self) -> np.ndarray:
        """Ordinals sorted by state value."""
        return np.argsort(self.states, kind="stable")


def _rational_atoms(atoms: Sequence[float]) -> Optional[List[Fraction]]:
    rationals = []
    for a in atoms:
        q = Fraction(a).limit_denominator(_MAX_DENOMINATOR)
        if abs(float(q) - a) > 1e-15 * max(1.0, abs(a)):
            return None
        rationals.append(q)
    return rationals


def _float_sums(atoms: Sequence[float], max_jumps: int) -> List[float]:
    level = [0.0]
    found = [0.0]
    for _ in range(max_jumps):
        candidates = sorted(v + a for v in level for a in atoms)
        level = []
        for value in candidates:
            if not level or value - level[-1] > STATE_TOLERANCE:
                level.append(value)
        found.extend(level)
    merged: List[float] = []
    for value in sorted(found):
        if not merged or value - merged[-1] > STATE_TOLERANCE:
            merged.append(value)
    return merged


def _rational_sums(atoms: Sequence[Fraction], max_jumps: int) -> List[float]:
    level: Set[Fraction] = {Fraction(0)}
    found: Set[Fraction] = set(level)
    for _ in range(max_jumps):
        level = {v + a for v in level for a in atoms}
        found |= level
    return [float(q) for q in sorted(found)]


def build_lattice(nu: JumpDistribution, K: int) -> StateLattice:
    """Deduplicated sums of at most K atoms of ν, with 0 first."""
    if not isinstance(nu, JumpDistribution):
        raise TypeError(f"expected a JumpDistribution, got {type(nu).__name__}")
    if K < 1:
        raise ValueError(f"lattice depth must be at least 1, got K={K}")

    rationals = _rational_atoms(nu.atoms)
    if rationals is not None:
        values = _rational_sums(rationals, K)
    else:
        values = _float_sums(nu.atoms, K)

    nonzero = [v for v in values if abs(v) > STATE_TOLERANCE]
    states = np.asarray([0.0] + nonzero, dtype=float)
    states.setflags(write=False)
    index = {float(v): i for i, v in enumerate(states)}

    order = np.argsort(states, kind="stable")
    sorted_states = states[order]

    def find(x: float) -> int:
        ordinal = index.get(float(x))
        if ordinal is not None:
            return ordinal
        pos = int(np.searchsorted(sorted_states, x))
        for candidate in (pos - 1, pos):
            if 0 <= candidate < len(sorted_states):
                if abs(sorted_states[candidate] - x) <= STATE_TOLERANCE * max(
                    1.0, abs(x)
                ):
                    return int(order[candidate])
        return -1

    n_states = len(states)
    successors = np.full((n_states, len(nu.atoms)), -1, dtype=np.int64)
    for i, x in enumerate(states):
        for j, a in enumerate(nu.atoms):
            successors[i, j] = find(x + a)
    successors.setflags(write=False)

    # Breadth-first depths; `parent` is the state a first-reaching word comes from.
    depth = np.full(n_states, -1, dtype=np.int64)
    parent = np.full(n_states, -1, dtype=np.int64)
    depth[0] = 0
    frontier = [0]
    for level in range(1, K + 1):
        nxt = []
        for i in frontier:
            for child in successors[i]:
                if child >= 0 and depth[child] < 0:
                    depth[child] = level
                    parent[child] = i
                    nxt.append(int(child))
        frontier = nxt
    depth.setflags(write=False)
    parent.setflags(write=False)

    logger.debug("Built lattice with %d states for K=%d", n_states, K)
    return StateLattice(
        states=states,
        atoms=tuple(nu.atoms),
        max_jumps=K,
        successors=successors,
        depth=depth,
        parent=parent,
        index=index,
    )


def poisson_truncation_depth(
    bounds: Bounds, horizon: float, tail: float = 1e-6
) -> int:
    """Smallest K ≥ 1 with P(Poisson((U²/L)·T) > K) < tail."""
    mean = bounds.rate_ceiling * horizon
    depth = max(int(stats.poisson.isf(tail, mean)), 1)
    while stats.poisson.sf(depth, mean) >= tail:
        depth += 1
    while depth > 1 and stats.poisson.sf(depth - 1, mean) < tail:
        depth -= 1
    return depth


class Substream(IntEnum):
    """Independent counter blocks inside one RngStream."""

    ETA = 0
    CLOCKS = 1
    JUMPS = 2
    AUX = 3


# Stream-id bases keep the solver, the verification ensembles and the demo
# on disjoint streams under one master seed.
SOLVER_STREAM = 0
SIMULATION_STREAM = 1 << 40
DEMO_STREAM = 2 << 40
DIAGNOSTIC_STREAM = 3 << 40

_UINT64 = 1 << 64


@dataclass(frozen=True)
class RngStream:
    """
    Counter-based random stream keyed by (seed, stream_id).

    Each substream is a Philox generator whose counter starts in its own
    2**192 block, so variate n of a substream depends only on
    (seed, stream_id, substream, n).
    """

    seed: int
    stream_id: int

    def __post_init__(self) -> None:
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= value < _UINT64:
                raise ValueError(
                    f"{name} must be a 64-bit unsigned integer, got {value}"
                )

    def generator(self, substream: Substream) -> np.random.Generator:
        bit_generator = np.random.Philox(
            key=(self.seed << 64) | self.stream_id,
            counter=int(substream) << 192,
        )
        return np.random.Generator(bit_generator)

    def uniforms(self, substream: Substream, n: int) -> np.ndarray:
        return self.generator(substream).random(n)

    def exponentials(self, substream: Substream, n: int) -> np.ndarray:
        return -np.log1p(-self.uniforms(substream, n))

    def child(self, j: int) -> "RngStream":
        """A statistically independent stream derived from this one."""
        state = np.random.SeedSequence([self.seed, self.stream_id, j]).generate_state(
            1, np.uint64
        )
        return RngStream(self.seed, int(state[0]))

    @classmethod
    def for_path(cls, seed: int, base: int, path_id: int) -> "RngStream":
        return cls(seed, base + path_id)
