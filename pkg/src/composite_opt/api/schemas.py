from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.composite_opt.core.baseline import BaselineConfig
from src.composite_opt.core.losses import LossFamily
from src.composite_opt.core.network import MlpSpec
from src.composite_opt.core.trainer import TrainConfig


class CsvSource(BaseModel):
    kind: Literal["csv"] = "csv"
    path: Path
    num_classes: Optional[int] = Field(None, ge=1, description="Overrides the network output size for label files")


class TwoPointSource(BaseModel):
    kind: Literal["two_point"] = "two_point"
    x1: Tuple[float, float] = (1.0, 0.0)
    x2: Tuple[float, float] = (0.0, 1.0)


class GaussianBlobsSource(BaseModel):
    kind: Literal["gaussian_blobs"] = "gaussian_blobs"
    n: int = Field(..., ge=1)
    m: int = Field(..., ge=1)
    c: int = Field(..., ge=1)
    seed: int


class RandomRegressionSource(BaseModel):
    kind: Literal["random_regression"] = "random_regression"
    n: int = Field(..., ge=1)
    m: int = Field(..., ge=1)
    c: int = Field(..., ge=1)
    seed: int


DataSource = Annotated[
    Union[CsvSource, TwoPointSource, GaussianBlobsSource, RandomRegressionSource],
    Field(discriminator="kind"),
]


class InitConfig(BaseModel):
    mode: Literal["gaussian", "inverse_sqrt_eps"] = Field(
        "gaussian",
        description="'inverse_sqrt_eps' divides the seeded Gaussian weights by sqrt(eps)",
    )
    scale: float = Field(1.0, gt=0.0, description="Extra multiplier applied to w0")


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    network: MlpSpec
    loss: LossFamily
    train: TrainConfig
    data: DataSource
    init: InitConfig = Field(default_factory=InitConfig)
    output_path: Path = Field(..., description="Directory receiving metrics.csv and summary.json")
    baseline: Optional[BaselineConfig] = None

    @model_validator(mode="after")
    def validate_dimensions(self) -> "ExperimentConfig":
        data = self.data
        expected_in = expected_out = None
        if isinstance(data, TwoPointSource):
            expected_in, expected_out = 2, 2
        elif isinstance(data, (GaussianBlobsSource, RandomRegressionSource)):
            expected_in, expected_out = data.m, data.c
        if expected_in is not None and (
            self.network.input_dim != expected_in or self.network.output_dim != expected_out
        ):
            raise ValueError(
                f"network sizes {self.network.layer_sizes} do not match data "
                f"(m={expected_in}, c={expected_out})"
            )
        if isinstance(data, RandomRegressionSource) and self.loss is LossFamily.CROSS_ENTROPY:
            raise ValueError("random_regression data requires the squared loss")
        return self


# ----- run summaries -----

class EstimatesSummary(BaseModel):
    hessian_bound_G: float
    jacobian_bound_H: float
    direction_bound_V: float
    hessian_estimated: bool
    note: str = "empirical estimates, not certified bounds"


class AuditSummary(BaseModel):
    algorithm: str
    lhs_avg_gap: float
    rhs_bound: Optional[float] = None
    satisfied: Optional[bool] = None
    skipped: bool = False
    reason: str = ""
    complexity_constant_N: Optional[float] = None


class FeasibilitySummary(BaseModel):
    rows: int
    dim: int
    numeric_rank: int
    residual_min: float
    b_norm: float


class RunSummary(BaseModel):
    command: str
    config: dict
    completed: bool
    abort_reason: str = ""
    iterations: int
    certificates_satisfied: Optional[bool] = None
    warm_start: bool = False
    init_distance: Optional[float] = None
    final_gap_upper: Optional[float] = None
    audit: Optional[AuditSummary] = None
    estimates: Optional[EstimatesSummary] = None
    feasibility: Optional[FeasibilitySummary] = None
    baseline_diverged: Optional[bool] = None
    wall_clock_seconds: float


class QScaleRequest(BaseModel):
    eps: List[float] = Field(..., min_length=1)
    seed: int

    @field_validator("eps")
    @classmethod
    def validate_eps(cls, v: List[float]) -> List[float]:
        if any(e <= 0.0 for e in v):
            raise ValueError("All eps values must be > 0")
        if any(later > earlier for earlier, later in zip(v, v[1:])):
            raise ValueError("eps values must be descending")
        return v
