from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    ValidationInfo,
    model_validator,
)

from .core import Bounds, JumpDistribution, TimeGrid
from .eta import EtaModel, EtaSpec

Subcommand = Literal["solve", "simulate", "check", "demo-nonuniqueness", "all"]

SolverMode = Literal["counting", "general"]

SaveTarget = Literal["local", "s3"]

CheckName = Literal["projection", "exp_clock", "martingale", "consistency", "power"]

ArtifactFormat = Literal["csv", "jsonl"]


class ConstantIntensity(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant"] = "constant"
    value: float = Field(..., gt=0, description="λ(t, x) for every t and x.")


class AffineStateIntensity(BaseModel):
    """λ(t, x) = base + slope·x, clipped to [L, U]."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["affine-state"] = "affine-state"
    base: float = Field(..., gt=0)
    slope: float = 0.0


class TimeSinusoidIntensity(BaseModel):
    """λ(t, x) = base + amplitude·sin(2π·frequency·t), clipped to [L, U]."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["time-sinusoid"] = "time-sinusoid"
    base: float = Field(..., gt=0)
    amplitude: float = 0.0
    frequency: float = 1.0


class TableIntensity(BaseModel):
    """
    λ read from a CSV with columns state, t, lambda (one row per state and
    left grid node). Relative paths resolve against the config file's folder.
    """

    model_config = ConfigDict(extra="forbid")

    kind: Literal["table"] = "table"
    path: str = Field(..., description="CSV file with columns state,t,lambda.")
    _resolved: Optional[Path] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_exists(self, info: ValidationInfo) -> "TableIntensity":
        base_dir = Path((info.context or {}).get("base_dir", "."))
        candidate = Path(self.path)
        if not candidate.is_absolute():
            candidate = base_dir / candidate
        if not candidate.is_file():
            raise ValueError(f"intensity table {candidate} does not exist")
        self._resolved = candidate
        return self

    @property
    def resolved_path(self) -> Path:
        return self._resolved if self._resolved is not None else Path(self.path)


IntensityForm = Annotated[
    Union[
        ConstantIntensity,
        AffineStateIntensity,
        TimeSinusoidIntensity,
        TableIntensity,
    ],
    Field(discriminator="kind"),
]


class ModelSection(BaseModel):
    """The LSI model: bounds, grid, η, local intensity λ and jump law ν."""

    model_config = ConfigDict(extra="forbid")

    bounds: Bounds
    grid: TimeGrid
    eta: EtaSpec
    intensity: IntensityForm = Field(
        default_factory=lambda: ConstantIntensity(value=1.0)
    )
    jumps: JumpDistribution = Field(default_factory=JumpDistribution.counting)

    @model_validator(mode="after")
    def _check_eta_fits(self) -> "ModelSection":
        EtaModel(spec=self.eta, bounds=self.bounds, grid=self.grid)
        return self

    def eta_model(self) -> EtaModel:
        return EtaModel(spec=self.eta, bounds=self.bounds, grid=self.grid)


class SolverSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: SolverMode = "counting"
    tol: float = Field(1e-4, gt=0)
    max_iter: int = Field(60, ge=1)
    damping: float = Field(0.5, gt=0, le=1, description="Used in general mode.")
    mc_paths: int = Field(20_000, ge=1000)
    max_jumps: Union[int, Literal["auto"]] = Field(
        "auto", description="Lattice depth K, or 'auto' for the Poisson tail rule."
    )
    restarts: bool = Field(True, description="Compare starts from L, midpoint, U.")
    word_cap: int = Field(1_000_000, ge=1)
    holder_limit: Optional[float] = Field(
        None,
        gt=0,
        description="Reject η whose Hölder estimate exceeds this; general mode "
        "derives a limit from the bounds when unset.",
    )

    @model_validator(mode="after")
    def _check_depth(self) -> "SolverSection":
        if isinstance(self.max_jumps, int) and self.max_jumps < 1:
            raise ValueError("max_jumps must be at least 1")
        return self


class VerifySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_paths: int = Field(100_000, ge=100)
    probe_times: List[float] = Field(
        default_factory=list, description="Defaults to T/4, T/2, 3T/4 and T."
    )
    checkpoints: List[float] = Field(
        default_factory=list, description="Defaults to the probe times."
    )
    tests: List[CheckName] = Field(
        default_factory=lambda: ["projection", "exp_clock", "martingale", "consistency"]
    )
    tv_limit: float = Field(0.02, gt=0, le=1)
    demo_paths: int = Field(10_000, ge=100)
    demo_steps: int = Field(64, ge=1)
    demo_mc_paths: int = Field(20_000, ge=1000)


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "outputs"
    formats: List[ArtifactFormat] = Field(default_factory=lambda: ["csv", "jsonl"])
    target: SaveTarget = "local"
    s3_bucket: Optional[str] = None

    @model_validator(mode="after")
    def _check_bucket(self) -> "OutputSection":
        if self.target == "s3" and not self.s3_bucket:
            raise ValueError("s3 output needs s3_bucket")
        return self


class RuntimeSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    threads: int = Field(1, ge=1)


class ExperimentConfig(BaseModel):
    """One experiment: what to solve, how to check it and where to write."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0, lt=2**64)
    model: ModelSection
    solver: SolverSection = Field(default_factory=SolverSection)
    verify: VerifySection = Field(default_factory=VerifySection)
    output: OutputSection = Field(default_factory=OutputSection)
    runtime: RuntimeSection = Field(default_factory=RuntimeSection)

    @model_validator(mode="after")
    def _check_cross_sections(self) -> "ExperimentConfig":
        if self.solver.mode == "counting" and not self.model.jumps.is_counting:
            raise ValueError("counting mode requires jumps = δ₁ (atoms [1.0])")
        grid = self.model.grid
        if not self.verify.probe_times:
            T = grid.horizon
            self.verify.probe_times = [0.25 * T, 0.5 * T, 0.75 * T, T]
        if not self.verify.checkpoints:
            self.verify.checkpoints = list(self.verify.probe_times)
        for name in ("probe_times", "checkpoints"):
            for t in getattr(self.verify, name):
                if not 0.0 < t <= grid.horizon * (1.0 + 1e-12) or not grid.is_node(t):
                    raise ValueError(
                        f"verify.{name}: {t} is not a grid node in (0, {grid.horizon}]"
                    )
        return self
