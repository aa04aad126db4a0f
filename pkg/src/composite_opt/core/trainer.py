"""Outer loop w^(t+1) = w^(t) - eta v^(t) with closed-form or inner-GD directions."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.composite_opt.core.dataset import Dataset
from src.composite_opt.core.errors import CompositeOptError, ContractViolation, ScheduleOverrun
from src.composite_opt.core.losses import LOSS_SMOOTHNESS, LossFamily, loss_grad, loss_value
from src.composite_opt.core.network import (
    AssumptionEstimates,
    MlpSpec,
    estimate_constants,
    forward_batch,
    jacobian_bound,
    jacobian_stack,
)
from src.composite_opt.core.subproblem import (
    DirectionBound,
    SolveCertificate,
    StepRule,
    SubproblemInput,
    analytic_smoothness,
    assemble,
    check_direction_bound,
    phi_value,
    solve_closed_form,
    solve_inner_gd,
)

logger = logging.getLogger(__name__)


class Algorithm(str, Enum):
    CLOSED_FORM = "closed_form"
    INNER_GD = "inner_gd"


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    eps: float = Field(..., gt=0.0, description="Tolerance epsilon")
    beta: float = Field(..., gt=0.0, description="Horizon constant, T = ceil(beta / eps)")
    D: float = Field(..., gt=0.0, description="Step scale, eta = D sqrt(eps)")
    alpha: float = Field(..., gt=0.0, description="Schedule scale")
    algorithm: Algorithm = Algorithm.CLOSED_FORM
    inner_tol: Optional[float] = Field(None, gt=0.0, description="Defaults to eps")
    inner_max_iters: int = Field(100_000, ge=0)
    inner_step: StepRule = StepRule.ESTIMATED
    warm_start: bool = Field(False, description="Start inner GD from the previous direction instead of zero")
    track_assumptions: bool = Field(True, description="Estimate G, H, V at every iteration")
    seed: int

    @model_validator(mode="after")
    def validate_alpha(self) -> "TrainConfig":
        cap = 1.0 / 3.0 if self.algorithm is Algorithm.CLOSED_FORM else 0.25
        if not self.alpha < cap:
            raise ValueError(f"alpha must lie in (0, {cap:.4g}) for algorithm '{self.algorithm.value}'")
        return self

    @property
    def horizon(self) -> int:
        """T = ceil(beta / eps), or 0 when beta < eps."""
        if self.beta < self.eps:
            return 0
        # round away float noise such as 2 / 0.05 = 40.000000000000004
        return int(math.ceil(round(self.beta / self.eps, 9)))

    @property
    def eta(self) -> float:
        return self.D * math.sqrt(self.eps)

    @property
    def tolerance(self) -> float:
        return self.inner_tol if self.inner_tol is not None else self.eps

    @property
    def reg(self) -> float:
        return self.eps * self.eps


@dataclass(frozen=True)
class IterationRecord:
    t: int
    objective_F: float
    gap_upper: float
    residual_phi: Optional[float]
    v_norm_sq: float
    inner_iters: int
    alpha_t: float
    assumption_snapshot: AssumptionEstimates = field(default_factory=AssumptionEstimates)
    certificate_satisfied: Optional[bool] = None


@dataclass(frozen=True)
class TheoremAudit:
    algorithm: Algorithm
    lhs_avg_gap: float
    rhs_bound: Optional[float]
    satisfied: Optional[bool]
    skipped: bool = False
    reason: str = ""
    complexity_constant_N: Optional[float] = None


@dataclass
class TrainResult:
    weights: np.ndarray
    records: List[IterationRecord]
    trajectory: List[np.ndarray]
    init_distance: Optional[float]
    completed: bool = True
    abort_reason: str = ""
    certificates: List[SolveCertificate] = field(default_factory=list)
    final_gap_upper: Optional[float] = None

    @property
    def all_certificates_satisfied(self) -> bool:
        return all(cert.satisfied for cert in self.certificates)

    def estimates(self) -> AssumptionEstimates:
        merged = AssumptionEstimates()
        for record in self.records:
            merged = merged.merge(record.assumption_snapshot)
        return merged


# ----- objective -----

def objective(spec: MlpSpec, dataset: Dataset, w) -> float:
    """F(w) = (1/n) sum_i phi_i(h(w; i))."""
    outputs = forward_batch(spec, w, dataset.inputs)
    return float(np.mean([loss_value(kind, z) for kind, z in zip(dataset.losses, outputs)]))


def output_grads(dataset: Dataset, outputs: np.ndarray) -> np.ndarray:
    return np.stack([loss_grad(kind, z) for kind, z in zip(dataset.losses, outputs)])


def objective_grad(spec: MlpSpec, dataset: Dataset, w, indices: Optional[np.ndarray] = None) -> np.ndarray:
    """Chain-rule gradient (1/|S|) sum_{i in S} H_i^T grad phi_i over the sample subset S."""
    if indices is None:
        indices = np.arange(dataset.num_samples)
    inputs = dataset.inputs[indices]
    outputs = forward_batch(spec, w, inputs)
    grads = np.stack([loss_grad(dataset.losses[i], z) for i, z in zip(indices, outputs)])
    jacobians = jacobian_stack(spec, w, inputs).per_sample
    total = np.zeros(spec.num_params)
    for jac, g in zip(jacobians, grads):
        total += jac.T @ g
    return total / len(indices)


def gap_upper(spec: MlpSpec, dataset: Dataset, w) -> float:
    """F(w) - (1/n) sum_i inf phi_i, an upper bound on F(w) - F_*."""
    return objective(spec, dataset, w) - float(np.mean(dataset.optimal_values()))


def final_gap(spec: MlpSpec, dataset: Dataset, w) -> Optional[float]:
    """gap_upper at the returned weights, or None when it is not finite."""
    if not np.all(np.isfinite(w)):
        return None
    value = gap_upper(spec, dataset, w)
    return value if np.isfinite(value) else None


def init_distance(spec: MlpSpec, dataset: Dataset, w0) -> Optional[float]:
    """(1/n) sum_i ||h(w0; i) - h_i^*||^2 for squared loss; None when h_i^* is not attained."""
    if dataset.family is not LossFamily.SQUARED:
        return None
    diff = forward_batch(spec, w0, dataset.inputs) - dataset.targets()
    return float(np.mean(np.sum(diff * diff, axis=1)))


# ----- schedule -----

def lr_schedule(config: TrainConfig, t: int, smoothness: float = LOSS_SMOOTHNESS) -> float:
    """alpha_i^(t) = (1 + eps)^t alpha / (e^beta L_phi)."""
    horizon = config.horizon
    if t < 0 or t > horizon:
        raise ScheduleOverrun(t, horizon)
    value = (1.0 + config.eps) ** t * config.alpha / (math.exp(config.beta) * smoothness)
    if value > config.alpha / smoothness + 1e-12:
        logger.warning(f"[Trainer] Schedule value {value:.6g} at t={t} exceeds alpha/L_phi={config.alpha / smoothness:.6g}")
    return value


# ----- training -----

def direction_bound_at(config: TrainConfig, spec: MlpSpec, dataset: Dataset, w, t: int = 0) -> DirectionBound:
    """V_implied of the exact subproblem direction at weights w and schedule step t."""
    outputs = forward_batch(spec, w, dataset.inputs)
    problem = SubproblemInput(
        jacobians=jacobian_stack(spec, w, dataset.inputs).per_sample,
        grads=output_grads(dataset, outputs),
        eta=config.eta,
        alphas=np.full(dataset.num_samples, lr_schedule(config, t)),
        reg=config.reg,
    )
    v_reg = solve_closed_form(assemble(problem))
    return check_direction_bound(problem, v_reg, config.eps)


def _snapshot(
    config: TrainConfig,
    spec: MlpSpec,
    dataset: Dataset,
    w: np.ndarray,
    V_implied: float,
) -> AssumptionEstimates:
    if not config.track_assumptions:
        return AssumptionEstimates(direction_bound_V=V_implied)
    estimates = estimate_constants(spec, [w], dataset, config.eps, max_probes=1, seed=config.seed)
    return estimates.merge(AssumptionEstimates(direction_bound_V=V_implied))


def run(
    config: TrainConfig,
    spec: MlpSpec,
    dataset: Dataset,
    w0,
    on_record: Optional[Callable[[IterationRecord], None]] = None,
) -> TrainResult:
    """
    Execute T outer iterations.

    At each t: outputs, output gradients and Jacobians for all samples;
    assemble the subproblem with reg = eps^2, eta = D sqrt(eps) and the
    scheduled alphas; take v^(t) from the closed form or inner GD; step.
    An unsatisfied inner certificate or a non-finite objective stops the run
    with ``completed=False`` and the last valid weights.
    """
    if spec.input_dim != dataset.input_dim or spec.output_dim != dataset.output_dim:
        raise ContractViolation(
            "network / dataset dimensions",
            (dataset.input_dim, dataset.output_dim),
            (spec.input_dim, spec.output_dim),
        )
    w = np.array(w0, dtype=float)
    horizon = config.horizon
    distance0 = init_distance(spec, dataset, w)
    result = TrainResult(weights=w.copy(), records=[], trajectory=[w.copy()], init_distance=distance0)
    optimal_mean = float(np.mean(dataset.optimal_values()))
    n = dataset.num_samples
    previous_v: Optional[np.ndarray] = None

    logger.info(
        f"[Trainer] Starting {config.algorithm.value} | T={horizon} | eps={config.eps:g} | "
        f"eta={config.eta:.6g} | d={spec.num_params} | n={n}"
    )
    start_time = time.time()
    for t in range(horizon):
        try:
            outputs = forward_batch(spec, w, dataset.inputs)
        except CompositeOptError as exc:
            _abort(result, f"forward pass failed at t={t}: {exc}")
            break
        values = np.array([loss_value(kind, z) for kind, z in zip(dataset.losses, outputs)])
        objective_value = float(np.mean(values))
        if not np.isfinite(objective_value):
            _abort(result, f"non-finite objective at t={t}")
            break

        alpha_t = lr_schedule(config, t)
        try:
            jacobians = jacobian_stack(spec, w, dataset.inputs)
            problem = SubproblemInput(
                jacobians=jacobians.per_sample,
                grads=output_grads(dataset, outputs),
                eta=config.eta,
                alphas=np.full(n, alpha_t),
                reg=config.reg,
            )
            system = assemble(problem)
            v_reg = solve_closed_form(system)
        except CompositeOptError as exc:
            _abort(result, f"subproblem failed at t={t}: {exc}")
            break

        bound = check_direction_bound(problem, v_reg, config.eps)
        try:
            snapshot = _snapshot(config, spec, dataset, w, bound.V_implied)
        except CompositeOptError as exc:
            _abort(result, f"assumption estimates failed at t={t}: {exc}")
            break
        certificate: Optional[SolveCertificate] = None
        if config.algorithm is Algorithm.CLOSED_FORM:
            v = v_reg
            inner_iters = 0
        else:
            analytic_L = None
            if config.inner_step is StepRule.ANALYTIC:
                analytic_L = analytic_smoothness(config.D, jacobian_bound(jacobians, config.eps), config.reg)
            v, certificate = solve_inner_gd(
                problem,
                system,
                config.tolerance,
                config.inner_max_iters,
                step_rule=config.inner_step,
                analytic_L=analytic_L,
                warm_start=previous_v if config.warm_start else None,
            )
            inner_iters = certificate.iterations
            result.certificates.append(certificate)

        record = IterationRecord(
            t=t,
            objective_F=objective_value,
            gap_upper=objective_value - optimal_mean,
            residual_phi=phi_value(problem, v),
            v_norm_sq=float(v @ v),
            inner_iters=inner_iters,
            alpha_t=alpha_t,
            assumption_snapshot=snapshot,
            certificate_satisfied=certificate.satisfied if certificate is not None else None,
        )
        result.records.append(record)
        if on_record is not None:
            on_record(record)
        logger.debug(
            f"[Trainer] t={t} | F={record.objective_F:.6e} | gap={record.gap_upper:.6e} | "
            f"Phi={record.residual_phi:.3e} | |v|^2={record.v_norm_sq:.3e} | inner={inner_iters}"
        )

        if certificate is not None and not certificate.satisfied:
            result.completed = False
            result.abort_reason = f"inner certificate unsatisfied at t={t}"
            logger.warning(f"[Trainer] Aborting: {result.abort_reason}")
            break

        w = w - config.eta * v
        if not np.all(np.isfinite(w)):
            _abort(result, f"non-finite weights after step t={t}")
            break
        previous_v = v
        result.trajectory.append(w.copy())
        result.weights = w.copy()

    result.final_gap_upper = final_gap(spec, dataset, result.weights)
    elapsed = time.time() - start_time
    shown = result.final_gap_upper if result.final_gap_upper is not None else float("nan")
    logger.info(
        f"[Trainer] Finished | iterations={len(result.records)} | completed={result.completed} | "
        f"final gap={shown:.6e} | time={elapsed:.2f}s"
    )
    return result


def _abort(result: TrainResult, reason: str) -> None:
    result.completed = False
    result.abort_reason = reason
    logger.error(f"[Trainer] {reason}; keeping the last finite weights")


# ----- theorem audit -----

def theorem_rhs(
    config: TrainConfig,
    estimates: AssumptionEstimates,
    init_dist: float,
    num_outputs: int,
    smoothness: float = LOSS_SMOOTHNESS,
) -> float:
    """Right-hand side of the average-gap bound for the configured algorithm."""
    eps, beta, alpha, D = config.eps, config.beta, config.alpha, config.D
    G = estimates.hessian_bound_G
    V = estimates.direction_bound_V
    H = estimates.jacobian_bound_H
    c = num_outputs
    scale = math.exp(beta) * smoothness
    if config.algorithm is Algorithm.CLOSED_FORM:
        first = scale * (1.0 + eps) / (2.0 * (1.0 - 3.0 * alpha) * alpha * beta) * init_dist * eps
        bracket = c * (4.0 + (V + 2.0) * G * D * D) ** 2 + 8.0 + 4.0 * V
        second = scale * (3.0 * eps + 2.0) / (8.0 * alpha * (1.0 - 3.0 * alpha)) * bracket * eps
        return first + second
    first = scale * (1.0 + eps) / (2.0 * (1.0 - 4.0 * alpha) * alpha * beta) * init_dist * eps
    bracket = D * D * H * H + c * (2.0 + (V + eps * eps + 2.0) * G * D * D) ** 2 + 2.0 + V
    second = scale * (4.0 * eps + 3.0) / (2.0 * alpha * (1.0 - 4.0 * alpha)) * bracket * eps
    return first + second


def complexity_constant(
    config: TrainConfig,
    estimates: AssumptionEstimates,
    init_dist: float,
    num_outputs: int,
    smoothness: float = LOSS_SMOOTHNESS,
) -> float:
    """Constant N of the inner-GD complexity statement, with estimates substituted."""
    alpha, beta, D = config.alpha, config.beta, config.D
    G = estimates.hessian_bound_G
    V = estimates.direction_bound_V
    H = estimates.jacobian_bound_H
    scale = math.exp(beta) * smoothness
    first = scale * init_dist / ((1.0 - 4.0 * alpha) * alpha * beta)
    bracket = D * D * H * H + num_outputs * (2.0 + (V + 3.0) * G * D * D) ** 2 + 2.0 + V
    return first + 7.0 * scale * bracket / (2.0 * alpha * (1.0 - 4.0 * alpha))


def audit_theorem(
    config: TrainConfig,
    records: List[IterationRecord],
    estimates: AssumptionEstimates,
    init_dist: Optional[float],
    *,
    num_outputs: int,
) -> TheoremAudit:
    """Compare the empirical average gap with the theorem's right-hand side."""
    lhs = float(np.mean([record.gap_upper for record in records])) if records else 0.0
    if init_dist is None:
        return TheoremAudit(
            algorithm=config.algorithm,
            lhs_avg_gap=lhs,
            rhs_bound=None,
            satisfied=None,
            skipped=True,
            reason="initial distance undefined: cross-entropy minimizer is not attained",
        )
    if len(records) != config.horizon:
        logger.warning(f"[Trainer] Auditing {len(records)} record(s) of a T={config.horizon} run")
    rhs = theorem_rhs(config, estimates, init_dist, num_outputs)
    complexity = None
    if config.algorithm is Algorithm.INNER_GD:
        complexity = complexity_constant(config, estimates, init_dist, num_outputs)
    return TheoremAudit(
        algorithm=config.algorithm,
        lhs_avg_gap=lhs,
        rhs_bound=rhs,
        satisfied=bool(lhs <= rhs),
        complexity_constant_N=complexity,
    )
