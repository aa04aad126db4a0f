"""Plain first-order baselines on F(w) for comparison runs."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.composite_opt.config import settings
from src.composite_opt.core.dataset import Dataset
from src.composite_opt.core.network import MlpSpec
from src.composite_opt.core.trainer import IterationRecord, final_gap, objective, objective_grad

logger = logging.getLogger(__name__)


class BaselineKind(str, Enum):
    GD = "gd"
    SGD = "sgd"


class BaselineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: BaselineKind = BaselineKind.GD
    step: float = Field(..., gt=0.0)
    iters: int = Field(..., ge=0)
    batch: Optional[int] = Field(None, ge=1, description="Minibatch size, SGD only")
    seed: Optional[int] = Field(None, description="Sampling seed, required for SGD")

    @model_validator(mode="after")
    def validate_sgd(self) -> "BaselineConfig":
        if self.kind is BaselineKind.SGD and (self.batch is None or self.seed is None):
            raise ValueError("SGD baseline requires both batch and seed")
        return self


@dataclass
class BaselineResult:
    weights: np.ndarray
    records: List[IterationRecord] = field(default_factory=list)
    diverged: bool = False
    final_gap_upper: Optional[float] = None


def run_baseline(config: BaselineConfig, spec: MlpSpec, dataset: Dataset, w0) -> BaselineResult:
    """
    Fixed-step GD (full batch) or SGD on F via the chain-rule gradient.

    Records share the trainer schema with ``inner_iters = 0`` and no
    ``residual_phi``. An objective above the divergence threshold truncates
    the run and sets ``diverged``.
    """
    w = np.array(w0, dtype=float)
    n = dataset.num_samples
    optimal_mean = float(np.mean(dataset.optimal_values()))
    rng = np.random.default_rng(config.seed) if config.kind is BaselineKind.SGD else None
    result = BaselineResult(weights=w.copy())

    logger.info(f"[Baseline] Starting {config.kind.value} | step={config.step:g} | iters={config.iters}")
    for t in range(config.iters):
        value = objective(spec, dataset, w) if np.all(np.isfinite(w)) else float("inf")
        if not np.isfinite(value) or value > settings.divergence_threshold:
            result.diverged = True
            logger.warning(f"[Baseline] Diverged at t={t} (F={value:.3e}); truncating")
            break
        if rng is None:
            grad = objective_grad(spec, dataset, w)
        else:
            batch = rng.choice(n, size=min(config.batch, n), replace=False)
            grad = objective_grad(spec, dataset, w, np.sort(batch))
        result.records.append(
            IterationRecord(
                t=t,
                objective_F=value,
                gap_upper=value - optimal_mean,
                residual_phi=None,
                v_norm_sq=float(grad @ grad),
                inner_iters=0,
                alpha_t=config.step,
            )
        )
        w = w - config.step * grad
        result.weights = w.copy()

    result.final_gap_upper = final_gap(spec, dataset, result.weights)
    if result.records:
        logger.info(f"[Baseline] Finished | last gap={result.records[-1].gap_upper:.6e} | diverged={result.diverged}")
    return result
