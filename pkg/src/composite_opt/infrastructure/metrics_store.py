from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from src.composite_opt.api.schemas import AuditSummary, EstimatesSummary, RunSummary
from src.composite_opt.config import settings
from src.composite_opt.core.errors import MetricsWriteError
from src.composite_opt.core.network import AssumptionEstimates
from src.composite_opt.core.trainer import IterationRecord, TheoremAudit

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["t", "objective_F", "gap_upper", "residual_phi", "v_norm_sq", "inner_iters", "alpha_t"]


def format_float(value: Optional[float]) -> str:
    """17 significant digits, enough to reproduce any double; None becomes an empty cell."""
    if value is None:
        return ""
    return format(float(value), ".17g")


def records_frame(records: Sequence[IterationRecord]) -> pd.DataFrame:
    rows = [
        {
            "t": str(record.t),
            "objective_F": format_float(record.objective_F),
            "gap_upper": format_float(record.gap_upper),
            "residual_phi": format_float(record.residual_phi),
            "v_norm_sq": format_float(record.v_norm_sq),
            "inner_iters": str(record.inner_iters),
            "alpha_t": format_float(record.alpha_t),
        }
        for record in records
    ]
    return pd.DataFrame(rows, columns=METRIC_COLUMNS)


def audit_summary(audit: Optional[TheoremAudit]) -> Optional[AuditSummary]:
    if audit is None:
        return None
    return AuditSummary(
        algorithm=audit.algorithm.value,
        lhs_avg_gap=audit.lhs_avg_gap,
        rhs_bound=audit.rhs_bound,
        satisfied=audit.satisfied,
        skipped=audit.skipped,
        reason=audit.reason,
        complexity_constant_N=audit.complexity_constant_N,
    )


def estimates_summary(estimates: Optional[AssumptionEstimates]) -> Optional[EstimatesSummary]:
    if estimates is None:
        return None
    return EstimatesSummary(
        hessian_bound_G=estimates.hessian_bound_G,
        jacobian_bound_H=estimates.jacobian_bound_H,
        direction_bound_V=estimates.direction_bound_V,
        hessian_estimated=estimates.hessian_estimated,
    )


def write_metrics_csv(records: Sequence[IterationRecord], path: Path | str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        records_frame(records).to_csv(path, index=False, lineterminator="\n")
    except OSError as exc:
        raise MetricsWriteError(path, exc) from exc
    return path


def write_summary(summary: RunSummary, path: Path | str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(summary.model_dump(mode="json"), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise MetricsWriteError(path, exc) from exc
    return path


def emit_metrics(
    records: Sequence[IterationRecord],
    audit: Optional[TheoremAudit],
    estimates: Optional[AssumptionEstimates],
    output_dir: Path | str,
    summary: RunSummary,
) -> tuple[Path, Path]:
    """
    Write ``metrics.csv`` (one row per record) and ``summary.json`` into
    ``output_dir``. The audit and estimates are folded into the summary.
    """
    output_dir = Path(output_dir)
    summary = summary.model_copy(
        update={"audit": audit_summary(audit), "estimates": estimates_summary(estimates)}
    )
    metrics_path = write_metrics_csv(records, output_dir / settings.metrics_filename)
    summary_path = write_summary(summary, output_dir / settings.summary_filename)
    logger.info(f"[Metrics] Wrote {len(records)} record(s) to {metrics_path} and summary to {summary_path}")
    return metrics_path, summary_path
