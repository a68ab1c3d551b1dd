"""
Exogenous intensity factors η.

Each model kind is a small pydantic model discriminated on `kind`; `EtaModel`
binds one of them to the intensity bounds and the time grid. Paths are sampled
whole, one value per grid cell, from the η substream of an `RngStream`.
"""

import logging
import math
from dataclasses import dataclass
from typing import Annotated, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import signal, special

from .core import Bounds, RngStream, Substream, TimeGrid

logger = logging.getLogger(__name__)

# Shortest (s, t) lag the Hölder estimate looks at, as a fraction of T.
HOLDER_MIN_SEPARATION = 0.1


class ConstantEta(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["constant"] = "constant"
    value: float = Field(..., gt=0)


class DeterministicEta(BaseModel):
    """η(t) = base + amplitude·sin(2π·frequency·t)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["deterministic"] = "deterministic"
    base: float = Field(..., gt=0)
    amplitude: float = 0.0
    frequency: float = 1.0


class RandomConstantEta(BaseModel):
    """η ≡ values[i] with probability weights[i], drawn once per path."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["random-constant"] = "random-constant"
    values: Tuple[float, ...]
    weights: Tuple[float, ...]

    @model_validator(mode="after")
    def _check_law(self) -> "RandomConstantEta":
        if not self.values or len(self.values) != len(self.weights):
            raise ValueError("values and weights must be non-empty and equally long")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        return self


class SingleJumpEta(BaseModel):
    """η = L before an Exp(rate) time E₁ and U after it."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["single-jump"] = "single-jump"
    rate: float = Field(1.0, gt=0)


class TwoStateMarkovEta(BaseModel):
    """Continuous-time chain switching between `low` and `high`."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["two-state-markov"] = "two-state-markov"
    low: float = Field(..., gt=0)
    high: float = Field(..., gt=0)
    rate_up: float = Field(..., gt=0)
    rate_down: float = Field(..., gt=0)
    start_high_prob: float = Field(0.5, ge=0, le=1)


class ClampedDiffusionEta(BaseModel):
    """
    Ornstein-Uhlenbeck factor Y mapped into the bounds by
    η = L + (U - L)·expit(Y), Euler-stepped on the grid.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["clamped-diffusion"] = "clamped-diffusion"
    mean_reversion: float = Field(1.0, ge=0)
    long_run: float = 0.0
    volatility: float = Field(1.0, ge=0)
    initial: float = 0.0


EtaSpec = Annotated[
    Union[
        ConstantEta,
        DeterministicEta,
        RandomConstantEta,
        SingleJumpEta,
        TwoStateMarkovEta,
        ClampedDiffusionEta,
    ],
    Field(discriminator="kind"),
]


class EtaModel(BaseModel):
    """An η model kind bound to the intensity bounds and the grid."""

    model_config = ConfigDict(frozen=True)

    spec: EtaSpec
    bounds: Bounds
    grid: TimeGrid

    @model_validator(mode="after")
    def _check_range(self) -> "EtaModel":
        spec, L, U = self.spec, self.bounds.L, self.bounds.U
        extremes: List[float] = []
        if isinstance(spec, ConstantEta):
            extremes = [spec.value]
        elif isinstance(spec, DeterministicEta):
            swing = abs(spec.amplitude)
            extremes = [spec.base - swing, spec.base + swing]
        elif isinstance(spec, RandomConstantEta):
            extremes = list(spec.values)
        elif isinstance(spec, TwoStateMarkovEta):
            extremes = [spec.low, spec.high]
        for value in extremes:
            if not L - 1e-12 <= value <= U + 1e-12:
                raise ValueError(
                    f"{spec.kind} value {value} lies outside the bounds [{L}, {U}]"
                )
        return self

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def is_finite_law(self) -> bool:
        """True when η takes finitely many paths, so expectations are finite sums."""
        return isinstance(self.spec, (ConstantEta, DeterministicEta, RandomConstantEta))

    @property
    def holder_exponent(self) -> float:
        return 0.5 if isinstance(self.spec, ClampedDiffusionEta) else 1.0

    def branches(self) -> List[Tuple[float, np.ndarray]]:
        """(probability, cell values) for every path of a finite-law model."""
        spec, n = self.spec, self.grid.n_steps
        if isinstance(spec, ConstantEta):
            return [(1.0, np.full(n, spec.value))]
        if isinstance(spec, DeterministicEta):
            return [(1.0, _deterministic_values(spec, self.grid, self.bounds))]
        if isinstance(spec, RandomConstantEta):
            return [(w, np.full(n, v)) for v, w in zip(spec.values, spec.weights)]
        raise ValueError(f"{spec.kind} η does not have a finite law")

    def mean_path(self) -> Optional[np.ndarray]:
        """E[η] per cell where it has a closed form, else None."""
        spec, nodes = self.spec, self.grid.left_nodes
        if self.is_finite_law:
            return np.sum([w * values for w, values in self.branches()], axis=0)
        if isinstance(spec, SingleJumpEta):
            jumped = 1.0 - np.exp(-spec.rate * nodes)
            return self.bounds.L + (self.bounds.U - self.bounds.L) * jumped
        if isinstance(spec, TwoStateMarkovEta):
            total = spec.rate_up + spec.rate_down
            stationary = spec.rate_up / total
            high = stationary + (spec.start_high_prob - stationary) * np.exp(
                -total * nodes
            )
            return spec.low + (spec.high - spec.low) * high
        return None


@dataclass(frozen=True, eq=False)
class EtaPath:
    """One sampled η path; `driver` is the jump time E₁ of a single-jump model."""

    grid: TimeGrid
    values: np.ndarray
    driver: Optional[float] = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, copy=True)
        if values.shape != (self.grid.n_steps,):
            raise ValueError(
                f"expected {self.grid.n_steps} values, got shape {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __call__(self, t: float) -> float:
        return float(self.values[self.grid.cell_of(t)])


def _deterministic_values(
    spec: DeterministicEta, grid: TimeGrid, bounds: Bounds
) -> np.ndarray:
    wave = np.sin(2.0 * np.pi * spec.frequency * grid.left_nodes)
    return np.clip(spec.base + spec.amplitude * wave, bounds.L, bounds.U)


def _sample_constant(model: EtaModel, rng: RngStream) -> EtaPath:
    assert isinstance(model.spec, ConstantEta)
    return EtaPath(model.grid, np.full(model.grid.n_steps, model.spec.value))


def _sample_deterministic(model: EtaModel, rng: RngStream) -> EtaPath:
    assert isinstance(model.spec, DeterministicEta)
    values = _deterministic_values(model.spec, model.grid, model.bounds)
    return EtaPath(model.grid, values)


def _sample_random_constant(model: EtaModel, rng: RngStream) -> EtaPath:
    spec = model.spec
    assert isinstance(spec, RandomConstantEta)
    u = rng.generator(Substream.ETA).random()
    cdf = np.cumsum(spec.weights)
    pick = int(min(np.searchsorted(cdf, u, side="right"), len(spec.values) - 1))
    return EtaPath(model.grid, np.full(model.grid.n_steps, spec.values[pick]))


def _sample_single_jump(model: EtaModel, rng: RngStream) -> EtaPath:
    spec = model.spec
    assert isinstance(spec, SingleJumpEta)
    u = rng.generator(Substream.ETA).random()
    driver = float(-math.log1p(-u) / spec.rate)
    # The value on [t_i, t_{i+1}) only looks at whether E₁ < t_i.
    jumped = driver < model.grid.left_nodes
    values = np.where(jumped, model.bounds.U, model.bounds.L)
    return EtaPath(model.grid, values, driver=driver)


def _sample_two_state(model: EtaModel, rng: RngStream) -> EtaPath:
    spec = model.spec
    assert isinstance(spec, TwoStateMarkovEta)
    gen = rng.generator(Substream.ETA)
    nodes = model.grid.left_nodes
    start_high = bool(gen.random() < spec.start_high_prob)
    high = start_high
    switches: List[float] = []
    t = 0.0
    while True:
        rate = spec.rate_down if high else spec.rate_up
        t += -math.log1p(-gen.random()) / rate
        if t >= model.grid.horizon:
            break
        switches.append(t)
        high = not high
    # Number of switches at or before each left node fixes the state there.
    flips = np.searchsorted(np.asarray(switches), nodes, side="right")
    state_high = np.where(flips % 2 == 0, start_high, not start_high)
    values = np.where(state_high, spec.high, spec.low)
    return EtaPath(model.grid, values)


def _sample_clamped_diffusion(model: EtaModel, rng: RngStream) -> EtaPath:
    spec = model.spec
    assert isinstance(spec, ClampedDiffusionEta)
    grid, bounds = model.grid, model.bounds
    h, n = grid.step, grid.n_steps
    z = special.ndtri(rng.uniforms(Substream.ETA, max(n - 1, 1)))[: n - 1]
    decay = 1.0 - spec.mean_reversion * h
    drive = spec.mean_reversion * spec.long_run * h + spec.volatility * math.sqrt(h) * z
    # Y_{i+1} = decay·Y_i + drive_i, started from Y_0 = initial.
    if n > 1:
        tail, _ = signal.lfilter([1.0], [1.0, -decay], drive, zi=[decay * spec.initial])
        factor = np.concatenate(([spec.initial], tail))
    else:
        factor = np.array([spec.initial])
    values = bounds.L + (bounds.U - bounds.L) * special.expit(factor)
    return EtaPath(grid, np.clip(values, bounds.L, bounds.U))


_SAMPLERS: Dict[str, Callable[[EtaModel, RngStream], EtaPath]] = {
    "constant": _sample_constant,
    "deterministic": _sample_deterministic,
    "random-constant": _sample_random_constant,
    "single-jump": _sample_single_jump,
    "two-state-markov": _sample_two_state,
    "clamped-diffusion": _sample_clamped_diffusion,
}


def sample_eta(model: EtaModel, rng: RngStream) -> EtaPath:
    """One η path on the model's grid, fully determined by `rng`."""
    return _SAMPLERS[model.kind](model, rng)


def holder_constant_estimate(
    model: EtaModel,
    pairs: int,
    rng: RngStream,
    alpha: Optional[float] = None,
    n_paths: int = 2000,
    min_separation: Optional[float] = None,
) -> float:
    """
    Monte Carlo estimate of sup over sampled (s, t) of E|η_t - η_s| / |t - s|^α.

    The (s, t) pairs are cell pairs at least `min_separation` (and one cell)
    apart, drawn uniformly among all such pairs, and the lag in the
    denominator is the lag between their left nodes.
    """
    if pairs < 100:
        raise ValueError(f"need at least 100 pairs, got {pairs}")
    alpha = model.holder_exponent if alpha is None else alpha
    grid = model.grid
    if min_separation is None:
        min_separation = HOLDER_MIN_SEPARATION * grid.horizon

    min_lag = max(int(np.ceil(min_separation / grid.step - 1e-9)), 1)
    lo_all, hi_all = np.triu_indices(grid.n_steps, k=min_lag)
    if lo_all.size == 0:
        raise ValueError(
            f"no cell pair on a {grid.n_steps}-cell grid of horizon "
            f"{grid.horizon:g} is at least {min_separation:g} apart"
        )
    picks = rng.generator(Substream.AUX).integers(lo_all.size, size=pairs)
    lo, hi = lo_all[picks], hi_all[picks]

    paths = np.stack(
        [sample_eta(model, rng.child(k)).values for k in range(n_paths)]
    )
    mean_abs = np.abs(paths[:, hi] - paths[:, lo]).mean(axis=0)
    lags = (hi - lo) * grid.step
    estimate = float(np.max(mean_abs / lags**alpha))
    logger.debug(
        "Hölder estimate for %s η: %.4g (alpha=%.2f, %d pairs, %d paths)",
        model.kind,
        estimate,
        alpha,
        pairs,
        n_paths,
    )
    return estimate
