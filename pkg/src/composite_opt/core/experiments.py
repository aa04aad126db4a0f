"""Interpolation feasibility of the stacked system and the Q-norm scaling study."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.linalg import lstsq, svdvals

from src.composite_opt.config import settings
from src.composite_opt.core.dataset import Dataset
from src.composite_opt.core.errors import ContractViolation
from src.composite_opt.core.losses import loss_grad
from src.composite_opt.core.network import Activation, MlpSpec, forward_batch, jacobian_stack

logger = logging.getLogger(__name__)

TWO_POINT_INPUTS = np.array([[1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class StackedSystem:
    """Rows eta * H_i and entries alpha_i * g_i stacked in sample order."""

    A_stack: np.ndarray
    b_stack: np.ndarray
    numeric_rank: int
    residual_min: float
    singular_values: np.ndarray

    @property
    def full_row_rank(self) -> bool:
        return self.numeric_rank == self.A_stack.shape[0]


@dataclass(frozen=True)
class QScaleRow:
    eps: float
    hidden: int
    q_norm: float
    ratio: float | None


def numeric_rank(singular_values: np.ndarray, shape: tuple[int, int]) -> int:
    if singular_values.size == 0 or singular_values[0] == 0.0:
        return 0
    threshold = max(shape) * singular_values[0] * settings.rank_rtol
    return int(np.count_nonzero(singular_values > threshold))


def stack_system(jacobians: np.ndarray, grads: np.ndarray, eta: float, alphas) -> StackedSystem:
    n, c, d = jacobians.shape
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (n,):
        raise ContractViolation("alphas", (n,), alphas.shape)
    A_stack = eta * jacobians.reshape(n * c, d)
    b_stack = (alphas[:, None] * grads).reshape(n * c)
    sigma = svdvals(A_stack)
    rank = numeric_rank(sigma, A_stack.shape)
    if np.any(b_stack):
        solution, *_ = lstsq(A_stack, b_stack)
        residual = float(np.linalg.norm(A_stack @ solution - b_stack))
    else:
        residual = 0.0
    return StackedSystem(A_stack=A_stack, b_stack=b_stack, numeric_rank=rank, residual_min=residual, singular_values=sigma)


def interpolation_feasibility(spec: MlpSpec, w, dataset: Dataset, eta: float, alphas) -> StackedSystem:
    """
    Check whether eta H_i v = alpha_i g_i can hold for every sample at once.

    Reports the numeric rank of the stacked Jacobians and the least-squares
    residual. A rank below n*c is logged as a warning; the data is not perturbed.
    """
    outputs = forward_batch(spec, w, dataset.inputs)
    grads = np.stack([loss_grad(kind, z) for kind, z in zip(dataset.losses, outputs)])
    jacobians = jacobian_stack(spec, w, dataset.inputs).per_sample
    system = stack_system(jacobians, grads, eta, alphas)
    rows, d = system.A_stack.shape
    logger.info(
        f"[Feasibility] rank={system.numeric_rank}/{min(rows, d)} | n*c={rows} | d={d} | "
        f"residual={system.residual_min:.3e} | |b|={np.linalg.norm(system.b_stack):.3e}"
    )
    if not system.full_row_rank:
        logger.warning(
            f"[Feasibility] Stacked Jacobian is rank deficient ({system.numeric_rank} < {rows}); "
            "consider rescaling or perturbing the data"
        )
    return system


# ----- Q-norm scaling -----

def hidden_width(eps: float) -> int:
    """m = ceil(1 / eps)."""
    return max(1, int(math.ceil(round(1.0 / eps, 9))))


def two_layer_linear_spec(hidden: int, seed: int = 0) -> MlpSpec:
    return MlpSpec(
        layer_sizes=[2, hidden, 2],
        activations=[Activation.IDENTITY],
        seed=seed,
        use_bias=False,
    )


def replicate_base_weights(base, hidden: int) -> np.ndarray:
    """
    Weight vector of the [2, hidden, 2] linear net whose every hidden neuron
    carries the base weights (w1, w2) in and (w3, w4) out.
    """
    base = np.asarray(base, dtype=float)
    if base.shape != (4,):
        raise ContractViolation("base weights", (4,), base.shape)
    first = np.tile(base[:2][:, None], (1, hidden))
    second = np.tile(base[2:][None, :], (hidden, 1))
    return np.concatenate([first.ravel(order="F"), second.ravel(order="F")])


def q_matrix(spec: MlpSpec, w, inputs: np.ndarray = TWO_POINT_INPUTS) -> np.ndarray:
    """Q(w): the per-sample Jacobians H_i stacked row-wise, shape (n*c, d)."""
    jacobians = jacobian_stack(spec, w, inputs).per_sample
    n, c, d = jacobians.shape
    return jacobians.reshape(n * c, d)


def q_norm_scaling_experiment(eps_list: Sequence[float], seed: int) -> List[QScaleRow]:
    """
    ||Q(w0)||_2 for the two-point linear net with m = ceil(1/eps) hidden neurons.

    The base weights are drawn once from ``seed``, independent of eps, and
    bounded away from zero so that every Jacobian entry is nonzero.
    """
    eps_values = [float(e) for e in eps_list]
    if not eps_values or any(e <= 0.0 for e in eps_values):
        raise ContractViolation("eps_list", "non-empty, all > 0", eps_values)
    if any(later > earlier for earlier, later in zip(eps_values, eps_values[1:])):
        raise ContractViolation("eps_list", "descending", eps_values)

    rng = np.random.default_rng(seed)
    base = rng.uniform(0.5, 1.5, size=4) * rng.choice([-1.0, 1.0], size=4)
    rows: List[QScaleRow] = []
    previous = None
    for eps in eps_values:
        hidden = hidden_width(eps)
        spec = two_layer_linear_spec(hidden, seed)
        norm = float(svdvals(q_matrix(spec, replicate_base_weights(base, hidden)))[0])
        ratio = norm / previous if previous else None
        rows.append(QScaleRow(eps=eps, hidden=hidden, q_norm=norm, ratio=ratio))
        logger.info(f"[Feasibility] eps={eps:g} | m={hidden} | ||Q||={norm:.6g} | ratio={ratio}")
        previous = norm
    return rows
