"""Outer loss families phi_i of the composite objective.

Both families are convex and 1-smooth in the network output z:

- ``SquaredLoss``: phi(z) = 1/2 ||z - y||^2, minimized at z = y.
- ``CrossEntropy``: phi(z) = log sum_k exp(z_k - z_a) for label a. The
  infimum 0 is approached but never attained.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp, softmax

from src.composite_opt.core.errors import ContractViolation

# Gradient Lipschitz constant shared by both families
LOSS_SMOOTHNESS = 1.0


class LossFamily(str, Enum):
    SQUARED = "squared"
    CROSS_ENTROPY = "cross_entropy"


@dataclass(frozen=True, eq=False)
class SquaredLoss:
    target: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        target = np.asarray(self.target, dtype=float)
        if target.ndim != 1 or target.size == 0:
            raise ContractViolation("squared-loss target", "non-empty vector", target.shape)
        object.__setattr__(self, "target", target)

    @property
    def num_outputs(self) -> int:
        return int(self.target.size)


@dataclass(frozen=True)
class CrossEntropy:
    label_index: int
    num_classes: int

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ContractViolation("cross-entropy classes", ">= 1", self.num_classes)
        if not 0 <= self.label_index < self.num_classes:
            raise ContractViolation("cross-entropy label", f"in [0, {self.num_classes})", self.label_index)

    @property
    def num_outputs(self) -> int:
        return self.num_classes


LossKind = Union[SquaredLoss, CrossEntropy]


@dataclass(frozen=True, eq=False)
class LossMeta:
    smoothness: float
    optimal_value: float
    optimal_point: Optional[np.ndarray] = None


def loss_family(kind: LossKind) -> LossFamily:
    return LossFamily.SQUARED if isinstance(kind, SquaredLoss) else LossFamily.CROSS_ENTROPY


def _as_output(kind: LossKind, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (kind.num_outputs,):
        raise ContractViolation("loss input", (kind.num_outputs,), z.shape)
    return z


def loss_value(kind: LossKind, z) -> float:
    """Evaluate phi_i(z)."""
    z = _as_output(kind, z)
    if isinstance(kind, SquaredLoss):
        diff = z - kind.target
        return 0.5 * float(diff @ diff)
    # label-shifted form; logsumexp subtracts the max internally
    return float(logsumexp(z - z[kind.label_index]))


def loss_grad(kind: LossKind, z) -> np.ndarray:
    """Gradient of phi_i with respect to the network output z."""
    z = _as_output(kind, z)
    if isinstance(kind, SquaredLoss):
        return z - kind.target
    grad = softmax(z)
    a = kind.label_index
    # label entry is the negative sum of the others so the components cancel
    grad[a] = 0.0
    grad[a] = -np.sum(grad)
    return grad


def loss_meta(kind: LossKind) -> LossMeta:
    if isinstance(kind, SquaredLoss):
        return LossMeta(
            smoothness=LOSS_SMOOTHNESS,
            optimal_value=0.0,
            optimal_point=kind.target.copy(),
        )
    return LossMeta(smoothness=LOSS_SMOOTHNESS, optimal_value=0.0, optimal_point=None)
