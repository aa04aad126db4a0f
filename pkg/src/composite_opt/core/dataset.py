from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.composite_opt.core.errors import ContractViolation
from src.composite_opt.core.losses import (
    CrossEntropy,
    LossFamily,
    LossKind,
    SquaredLoss,
    loss_family,
    loss_meta,
)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs x^(i) stacked row-wise plus one outer loss per sample."""

    inputs: np.ndarray
    losses: tuple[LossKind, ...]

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim != 2 or inputs.shape[0] == 0:
            raise ContractViolation("dataset inputs", "non-empty (n, m) matrix", inputs.shape)
        losses = tuple(self.losses)
        if len(losses) != inputs.shape[0]:
            raise ContractViolation("dataset losses", inputs.shape[0], len(losses))
        widths = {kind.num_outputs for kind in losses}
        if len(widths) != 1:
            raise ContractViolation("dataset output dimension", "one value", sorted(widths))
        families = {loss_family(kind) for kind in losses}
        if len(families) != 1:
            raise ContractViolation("dataset loss family", "a single family", sorted(f.value for f in families))
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "losses", losses)

    @classmethod
    def regression(cls, inputs, targets) -> "Dataset":
        targets = np.asarray(targets, dtype=float)
        if targets.ndim != 2:
            raise ContractViolation("regression targets", "(n, c) matrix", targets.shape)
        return cls(inputs=inputs, losses=tuple(SquaredLoss(row) for row in targets))

    @classmethod
    def classification(cls, inputs, labels: Sequence[int], num_classes: int) -> "Dataset":
        return cls(
            inputs=inputs,
            losses=tuple(CrossEntropy(int(label), num_classes) for label in labels),
        )

    @property
    def num_samples(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def output_dim(self) -> int:
        return self.losses[0].num_outputs

    @property
    def family(self) -> LossFamily:
        return loss_family(self.losses[0])

    def optimal_values(self) -> np.ndarray:
        return np.array([loss_meta(kind).optimal_value for kind in self.losses])

    def targets(self) -> np.ndarray:
        """Per-sample minimizers h_i^*; only defined for squared loss."""
        if self.family is not LossFamily.SQUARED:
            raise ContractViolation("dataset targets", "squared-loss dataset", self.family.value)
        return np.stack([kind.target for kind in self.losses])
