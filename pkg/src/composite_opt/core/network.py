"""Fully-connected classifier h(w; i) with exact per-sample Jacobians.

Weight layout of the flat vector w: for each layer l = 1..L in order,
W^(l) (shape n_{l-1} x n_l) in column-major order followed by b^(l) when
biases are enabled. The output is h = W^(L)^T a_{L-1} + b^(L), hidden layers
apply a twice continuously differentiable activation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.special import expit

from src.composite_opt.config import settings
from src.composite_opt.core.dataset import Dataset
from src.composite_opt.core.errors import ContractViolation, EstimationError, NonFiniteError
from src.composite_opt.core.linalg import operator_norm_symmetric, spectral_norm
from src.composite_opt.core.parallel import map_samples

logger = logging.getLogger(__name__)

# ARPACK needs k < dim; below this the finite-difference Hessian is built densely
_DENSE_HESSIAN_DIM = 3


class Activation(str, Enum):
    IDENTITY = "identity"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SOFTPLUS = "softplus"


def activate(kind: Activation, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (sigma(z), sigma'(z))."""
    if kind is Activation.IDENTITY:
        return z, np.ones_like(z)
    if kind is Activation.SIGMOID:
        s = expit(z)
        return s, s * (1.0 - s)
    if kind is Activation.TANH:
        t = np.tanh(z)
        return t, 1.0 - t * t
    return np.logaddexp(0.0, z), expit(z)


class MlpSpec(BaseModel):
    """Architecture of the classifier; serializable to the experiment config."""

    model_config = ConfigDict(frozen=True)

    layer_sizes: List[int] = Field(..., min_length=2, description="[m, n_1, ..., c]")
    activations: List[Activation] = Field(default_factory=list, description="One per hidden layer")
    seed: int = Field(..., description="Seed for the Gaussian initialization")
    init_scale: float = Field(1.0, gt=0.0)
    use_bias: bool = True

    @field_validator("layer_sizes")
    @classmethod
    def validate_sizes(cls, v: List[int]) -> List[int]:
        if any(size < 1 for size in v):
            raise ValueError("All layer sizes must be >= 1")
        return v

    @model_validator(mode="after")
    def validate_activations(self) -> "MlpSpec":
        if len(self.activations) != len(self.layer_sizes) - 2:
            raise ValueError(
                f"Expected {len(self.layer_sizes) - 2} hidden activations, got {len(self.activations)}"
            )
        return self

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_params(self) -> int:
        bias = 1 if self.use_bias else 0
        return sum(
            n_in * n_out + bias * n_out
            for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )

    def layer_slices(self) -> List[tuple[slice, Optional[slice]]]:
        """(weight slice, bias slice) of every layer inside the flat vector."""
        slices = []
        cursor = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w_slice = slice(cursor, cursor + n_in * n_out)
            cursor = w_slice.stop
            b_slice = None
            if self.use_bias:
                b_slice = slice(cursor, cursor + n_out)
                cursor = b_slice.stop
            slices.append((w_slice, b_slice))
        return slices


@dataclass(frozen=True, eq=False)
class LayerParams:
    weight: np.ndarray
    bias: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class JacobianStack:
    per_sample: np.ndarray
    eval_point: np.ndarray = field(repr=False)

    @property
    def num_samples(self) -> int:
        return int(self.per_sample.shape[0])


@dataclass(frozen=True)
class AssumptionEstimates:
    """Empirical stand-ins for G, H and V. Estimates, not certified bounds."""

    hessian_bound_G: float = 0.0
    jacobian_bound_H: float = 0.0
    direction_bound_V: float = 0.0
    hessian_estimated: bool = False

    def __post_init__(self) -> None:
        for name in ("hessian_bound_G", "jacobian_bound_H", "direction_bound_V"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ContractViolation(name, "finite and >= 0", value)

    def merge(self, other: "AssumptionEstimates") -> "AssumptionEstimates":
        return AssumptionEstimates(
            hessian_bound_G=max(self.hessian_bound_G, other.hessian_bound_G),
            jacobian_bound_H=max(self.jacobian_bound_H, other.jacobian_bound_H),
            direction_bound_V=max(self.direction_bound_V, other.direction_bound_V),
            hessian_estimated=self.hessian_estimated or other.hessian_estimated,
        )


# ----- weight vectorization -----

def vectorize(params: Sequence[LayerParams]) -> np.ndarray:
    pieces: List[np.ndarray] = []
    for layer in params:
        pieces.append(np.asarray(layer.weight, dtype=float).ravel(order="F"))
        if layer.bias is not None:
            pieces.append(np.asarray(layer.bias, dtype=float).ravel())
    return np.concatenate(pieces) if pieces else np.zeros(0)


def devectorize(spec: MlpSpec, w: np.ndarray) -> List[LayerParams]:
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.num_params,):
        raise ContractViolation("weight vector", (spec.num_params,), w.shape)
    params = []
    for (w_slice, b_slice), n_in, n_out in zip(spec.layer_slices(), spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        weight = w[w_slice].reshape((n_in, n_out), order="F")
        bias = w[b_slice] if b_slice is not None else None
        params.append(LayerParams(weight=weight, bias=bias))
    return params


def init_weights(spec: MlpSpec) -> np.ndarray:
    """Gaussian weights with std init_scale / sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(spec.seed)
    params = []
    for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        weight = rng.standard_normal((n_in, n_out)) * (spec.init_scale / np.sqrt(n_in))
        bias = np.zeros(n_out) if spec.use_bias else None
        params.append(LayerParams(weight=weight, bias=bias))
    return vectorize(params)


def init_inverse_sqrt_eps(spec: MlpSpec, eps: float) -> np.ndarray:
    """Seeded base weights scaled by 1/sqrt(eps), so ||H_i^(0)|| grows like 1/sqrt(eps)."""
    if eps <= 0.0:
        raise ContractViolation("eps", "> 0", eps)
    return init_weights(spec) / np.sqrt(eps)


# ----- forward / Jacobian -----

def _check_input(spec: MlpSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.input_dim,):
        raise ContractViolation("network input", (spec.input_dim,), x.shape)
    return x


def _trace(spec: MlpSpec, params: Sequence[LayerParams], x: np.ndarray):
    """Forward pass keeping layer inputs and activation derivatives."""
    layer_inputs = [x]
    derivatives = []
    a = x
    for index, layer in enumerate(params):
        z = layer.weight.T @ a
        if layer.bias is not None:
            z = z + layer.bias
        if index == len(params) - 1:
            return layer_inputs, derivatives, z
        a, da = activate(spec.activations[index], z)
        layer_inputs.append(a)
        derivatives.append(da)
    raise ContractViolation("network", ">= 1 layer", 0)


def _params_checked(spec: MlpSpec, w) -> List[LayerParams]:
    w = np.asarray(w, dtype=float)
    params = devectorize(spec, w)
    if not np.all(np.isfinite(w)):
        raise NonFiniteError("weights")
    return params


def forward(spec: MlpSpec, w, x) -> np.ndarray:
    """h(w; x) in R^c."""
    params = _params_checked(spec, w)
    _, _, out = _trace(spec, params, _check_input(spec, x))
    return out


def forward_batch(spec: MlpSpec, w, inputs: np.ndarray) -> np.ndarray:
    """Outputs for every row of ``inputs`` as an (n, c) matrix."""
    params = _params_checked(spec, w)
    return np.stack([_trace(spec, params, _check_input(spec, x))[2] for x in inputs])


def _jacobian_from_params(spec: MlpSpec, params: Sequence[LayerParams], x: np.ndarray) -> np.ndarray:
    layer_inputs, derivatives, out = _trace(spec, params, x)
    c = out.size
    jac = np.empty((c, spec.num_params))
    # d h / d z^(l), one row per output coordinate
    seed = np.eye(c)
    slices = spec.layer_slices()
    for index in range(len(params) - 1, -1, -1):
        a_prev = layer_inputs[index]
        w_slice, b_slice = slices[index]
        # column-major: entry (p, q) of W sits at q * n_in + p
        jac[:, w_slice] = (seed[:, :, None] * a_prev[None, None, :]).reshape(c, -1)
        if b_slice is not None:
            jac[:, b_slice] = seed
        if index > 0:
            seed = (seed @ params[index].weight.T) * derivatives[index - 1]
    return jac


def jacobian(spec: MlpSpec, w, x) -> np.ndarray:
    """Exact c x d Jacobian of h(w; x) by reverse accumulation with c seed rows."""
    params = _params_checked(spec, w)
    return _jacobian_from_params(spec, params, _check_input(spec, x))


def jacobian_stack(spec: MlpSpec, w, inputs: np.ndarray) -> JacobianStack:
    """H_i for every sample, computed in parallel and returned in sample order."""
    w = np.array(w, dtype=float)
    params = _params_checked(spec, w)
    per_sample = map_samples(lambda x: _jacobian_from_params(spec, params, _check_input(spec, x)), list(inputs))
    return JacobianStack(per_sample=np.stack(per_sample), eval_point=w)


def taylor_residual(spec: MlpSpec, w, v, eta: float, x) -> np.ndarray:
    """eps_i = h(w - eta v) - h(w) + eta H v, the second-order linearization error."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape != w.shape:
        raise ContractViolation("direction", w.shape, v.shape)
    jac = jacobian(spec, w, x)
    return forward(spec, w - eta * v, x) - forward(spec, w, x) + eta * (jac @ v)


# ----- assumption constants -----

def hessian_spectral_norm(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    w: np.ndarray,
    iterations: Optional[int] = None,
    step: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Spectral norm of the Hessian of a scalar function given its gradient.

    Hessian-vector products are central differences of ``grad_fn`` applied
    matrix-free. The top-magnitude eigenvalue comes from ARPACK's Lanczos
    solver, capped at ``iterations`` * d updates; tiny dimensions are solved densely.
    """
    w = np.asarray(w, dtype=float)
    iterations = iterations or settings.hessian_power_iterations
    step = step or settings.hessian_fd_step
    dim = w.size

    def hvp(v: np.ndarray) -> np.ndarray:
        v = np.ravel(v)
        return (grad_fn(w + step * v) - grad_fn(w - step * v)) / (2.0 * step)

    if dim == 0:
        return 0.0
    if dim <= _DENSE_HESSIAN_DIM:
        dense = np.stack([hvp(e) for e in np.eye(dim)], axis=1)
        return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (dense + dense.T)))))

    rng = rng if rng is not None else np.random.default_rng(0)
    start = rng.standard_normal(dim)
    image = hvp(start)
    if not np.all(np.isfinite(image)):
        return float("inf")
    if not np.any(image):
        return 0.0
    operator = LinearOperator((dim, dim), matvec=hvp, dtype=float)
    try:
        values = eigsh(operator, k=1, which="LM", v0=start, maxiter=iterations * dim, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        if len(exc.eigenvalues):
            return float(np.max(np.abs(exc.eigenvalues)))
        logger.warning(f"[Network] Lanczos did not converge in {iterations * dim} updates; using power iteration")
        return operator_norm_symmetric(hvp, dim, iterations, rng)
    return float(np.max(np.abs(values)))


def _pick_probes(w_samples: Sequence[np.ndarray], limit: int) -> List[np.ndarray]:
    if len(w_samples) <= limit:
        return list(w_samples)
    picks = np.unique(np.linspace(0, len(w_samples) - 1, limit).round().astype(int))
    return [w_samples[k] for k in picks]


def jacobian_bound(jacobians: JacobianStack, eps: float) -> float:
    """sqrt(eps) * max_i ||H_i||_2, the constant H of ||H_i|| <= H / sqrt(eps)."""
    iterations = settings.lmax_power_iterations
    norms = []
    for index, jac in enumerate(jacobians.per_sample):
        value = spectral_norm(jac, iterations, np.random.default_rng(index))
        if not np.isfinite(value):
            raise EstimationError("jacobian_bound_H", index)
        norms.append(value)
    return float(np.sqrt(eps) * max(norms))


def estimate_constants(
    spec: MlpSpec,
    w_samples: Sequence[np.ndarray],
    dataset: Dataset,
    eps: float,
    *,
    iterations: Optional[int] = None,
    max_probes: Optional[int] = None,
    max_pairs: Optional[int] = None,
    seed: int = 0,
) -> AssumptionEstimates:
    """
    Estimate G (Hessian bound of h_j(.; i)) and H (scaled Jacobian bound).

    G is the largest Hessian spectral norm over at most ``max_probes`` probe
    weights and the first ``max_pairs`` (sample, output) pairs. V is left at
    0 and merged in later from the subproblem diagnostics.
    """
    if not w_samples:
        raise ContractViolation("w_samples", "non-empty list", 0)
    if eps <= 0.0:
        raise ContractViolation("eps", "> 0", eps)
    probes = _pick_probes(list(w_samples), max_probes or settings.hessian_max_probes)
    pairs = [(i, j) for i in range(dataset.num_samples) for j in range(dataset.output_dim)]
    pairs = pairs[: max_pairs or settings.hessian_max_pairs]
    rng = np.random.default_rng(seed)

    g_est = 0.0
    h_est = 0.0
    for probe in probes:
        probe = np.asarray(probe, dtype=float)
        for i, j in pairs:
            x = dataset.inputs[i]
            norm = hessian_spectral_norm(lambda u: jacobian(spec, u, x)[j], probe, iterations, rng=rng)
            if not np.isfinite(norm):
                raise EstimationError("hessian_bound_G", i)
            g_est = max(g_est, norm)
        h_est = max(h_est, jacobian_bound(jacobian_stack(spec, probe, dataset.inputs), eps))

    logger.debug(
        f"[Network] Estimated G={g_est:.6g}, H={h_est:.6g} over {len(probes)} probe(s), {len(pairs)} pair(s)"
    )
    return AssumptionEstimates(hessian_bound_G=g_est, jacobian_bound_H=h_est, hessian_estimated=True)
