"""Command handlers behind ``composite-opt``; each returns the process exit code."""
from __future__ import annotations

import logging
import sys
import time
from typing import Optional, TextIO

import numpy as np
import pandas as pd

from src.composite_opt.api.schemas import (
    ExperimentConfig,
    FeasibilitySummary,
    QScaleRequest,
    RunSummary,
)
from src.composite_opt.config import settings
from src.composite_opt.core.baseline import run_baseline
from src.composite_opt.core.dataset import Dataset
from src.composite_opt.core.errors import ContractViolation
from src.composite_opt.core.experiments import StackedSystem, interpolation_feasibility, q_norm_scaling_experiment
from src.composite_opt.core.network import AssumptionEstimates, estimate_constants, init_inverse_sqrt_eps, init_weights
from src.composite_opt.core.trainer import Algorithm, audit_theorem, direction_bound_at, lr_schedule, run
from src.composite_opt.infrastructure.datasets import load_dataset
from src.composite_opt.infrastructure.metrics_store import (
    emit_metrics,
    estimates_summary,
    write_summary,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INCOMPLETE = 1


def prepare(config: ExperimentConfig) -> tuple[Dataset, np.ndarray]:
    """Dataset plus the initial weights selected by ``init.mode``."""
    spec = config.network
    dataset = load_dataset(config.data, config.loss, spec.output_dim)
    if dataset.input_dim != spec.input_dim or dataset.output_dim != spec.output_dim:
        raise ContractViolation(
            "dataset vs network sizes",
            (spec.input_dim, spec.output_dim),
            (dataset.input_dim, dataset.output_dim),
        )
    if config.init.mode == "inverse_sqrt_eps":
        w0 = init_inverse_sqrt_eps(spec, config.train.eps)
    else:
        w0 = init_weights(spec)
    return dataset, config.init.scale * w0


def _feasibility_summary(system: StackedSystem) -> FeasibilitySummary:
    rows, dim = system.A_stack.shape
    return FeasibilitySummary(
        rows=rows,
        dim=dim,
        numeric_rank=system.numeric_rank,
        residual_min=system.residual_min,
        b_norm=float(np.linalg.norm(system.b_stack)),
    )


def cmd_run(config: ExperimentConfig) -> int:
    start_time = time.time()
    dataset, w0 = prepare(config)
    result = run(config.train, config.network, dataset, w0)

    estimates = result.estimates()
    audit = audit_theorem(
        config.train,
        result.records,
        estimates,
        result.init_distance,
        num_outputs=dataset.output_dim,
    )
    certificates_ok: Optional[bool] = None
    if config.train.algorithm is Algorithm.INNER_GD:
        certificates_ok = result.all_certificates_satisfied
    summary = RunSummary(
        command="run",
        config=config.model_dump(mode="json"),
        completed=result.completed,
        abort_reason=result.abort_reason,
        iterations=len(result.records),
        certificates_satisfied=certificates_ok,
        warm_start=config.train.warm_start,
        init_distance=result.init_distance,
        final_gap_upper=result.final_gap_upper,
        wall_clock_seconds=time.time() - start_time,
    )
    emit_metrics(result.records, audit, estimates, config.output_path, summary)

    if audit.skipped:
        logger.info(f"[CLI] Theorem audit skipped: {audit.reason}")
    else:
        logger.info(
            f"[CLI] Theorem audit: avg gap {audit.lhs_avg_gap:.6e} <= bound {audit.rhs_bound:.6e} -> {audit.satisfied}"
        )
    ok = result.completed and certificates_ok is not False
    return EXIT_OK if ok else EXIT_INCOMPLETE


def cmd_check(config: ExperimentConfig) -> int:
    """Assumption estimates and interpolation feasibility at w0, no training."""
    start_time = time.time()
    dataset, w0 = prepare(config)
    train = config.train
    estimates = estimate_constants(config.network, [w0], dataset, train.eps, seed=train.seed)
    bound = direction_bound_at(train, config.network, dataset, w0)
    estimates = estimates.merge(AssumptionEstimates(direction_bound_V=bound.V_implied))
    alphas = np.full(dataset.num_samples, lr_schedule(train, 0))
    system = interpolation_feasibility(config.network, w0, dataset, train.eta, alphas)
    summary = RunSummary(
        command="check",
        config=config.model_dump(mode="json"),
        completed=True,
        iterations=0,
        estimates=estimates_summary(estimates),
        feasibility=_feasibility_summary(system),
        wall_clock_seconds=time.time() - start_time,
    )
    write_summary(summary, config.output_path / settings.summary_filename)
    logger.info(
        f"[CLI] G~{estimates.hessian_bound_G:.4g} | H~{estimates.jacobian_bound_H:.4g} | "
        f"V~{estimates.direction_bound_V:.4g} (|v_reg|^2={bound.norm_sq:.4g}) | "
        f"rank {system.numeric_rank}/{system.A_stack.shape[0]}"
    )
    return EXIT_OK


def cmd_baseline(config: ExperimentConfig) -> int:
    if config.baseline is None:
        raise ContractViolation("baseline", "a configured baseline section", None)
    start_time = time.time()
    dataset, w0 = prepare(config)
    result = run_baseline(config.baseline, config.network, dataset, w0)
    summary = RunSummary(
        command="baseline",
        config=config.model_dump(mode="json"),
        completed=not result.diverged,
        abort_reason="diverged" if result.diverged else "",
        iterations=len(result.records),
        baseline_diverged=result.diverged,
        final_gap_upper=result.final_gap_upper,
        wall_clock_seconds=time.time() - start_time,
    )
    emit_metrics(result.records, None, None, config.output_path, summary)
    return EXIT_INCOMPLETE if result.diverged else EXIT_OK


def cmd_qscale(request: QScaleRequest, out: Optional[TextIO] = None) -> int:
    rows = q_norm_scaling_experiment(request.eps, request.seed)
    frame = pd.DataFrame(
        {
            "eps": [row.eps for row in rows],
            "hidden": [row.hidden for row in rows],
            "q_norm": [row.q_norm for row in rows],
            "ratio": [row.ratio for row in rows],
        }
    )
    frame.to_csv(out or sys.stdout, index=False, float_format="%.10g", lineterminator="\n")
    return EXIT_OK
