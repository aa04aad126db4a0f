from __future__ import annotations
import os
from pathlib import Path
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# ----- default path helpers -----

# Project root (repository directory)
def _default_project_root() -> Path:
    cwd = Path.cwd()
    if (cwd / "src" / "composite_opt" / "config.py").exists():
        return cwd
    # __file__ is <root>/src/composite_opt/config.py, so parents[2] = <root>/
    return Path(__file__).resolve().parents[2]

# Default directory for run outputs
def _default_runs_dir() -> Path:
    return _default_project_root() / "runs"

# Metrics file name
def _default_metrics_filename() -> str:
    return "metrics.csv"
# Summary file name
def _default_summary_filename() -> str:
    return "summary.json"

# ----- execution -----

# Define worker cap for per-sample parallel work
def _default_threads() -> int:
    """
    Maximum number of worker threads used for per-sample Jacobian evaluation.
    Set COMPOSITE_OPT_THREADS=1 to force single-threaded execution.
    Reductions over samples always run in fixed left-to-right order, so the
    value never changes numerical results.
    """
    return max(1, min(4, os.cpu_count() or 1))

# Define log level
def _default_log_level() -> str:
    return "INFO"

# ----- numeric defaults -----

# Power iterations for Hessian spectral norms (assumption constant G)
def _default_hessian_power_iterations() -> int:
    return 30
# Power iterations for the largest eigenvalue of the subproblem matrix
def _default_lmax_power_iterations() -> int:
    return 50
# Inflation applied to the estimated largest eigenvalue (inner GD step)
def _default_lmax_inflation() -> float:
    return 1.01
# Maximum probe weight vectors used when estimating G
def _default_hessian_max_probes() -> int:
    return 8
# Maximum (sample, output) pairs used when estimating G
def _default_hessian_max_pairs() -> int:
    return 64
# Central-difference step for Hessian-vector products
def _default_hessian_fd_step() -> float:
    return 1e-4

# Largest parameter count for which the dense subproblem is assembled
def _default_max_dense_dim() -> int:
    """
    Dense assembly stores a d x d matrix and factorizes it in O(d^3).
    Beyond this size assembly is refused.
    """
    return 4096

# Relative factor of the SVD numeric-rank threshold
def _default_rank_rtol() -> float:
    return 1e-12

# Objective value treated as divergence by the baselines
def _default_divergence_threshold() -> float:
    return 1e12


class Settings(BaseSettings):
    """
    Runtime settings for the library and the CLI.

    Configuration precedence (highest to lowest):
    1. Environment variables prefixed with COMPOSITE_OPT_ (e.g. COMPOSITE_OPT_THREADS)
    2. .env file (if exists)
    3. Default values (default_factory)

    Experiment parameters (network, data, schedule) are NOT settings: they
    live in the experiment config file parsed by src.composite_opt.api.config_file.
    """
    model_config = SettingsConfigDict(
        env_prefix="COMPOSITE_OPT_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Filesystem layout
    project_root: Path = Field(default_factory=_default_project_root)
    runs_dir: Path = Field(default_factory=_default_runs_dir)
    metrics_filename: str = Field(default_factory=_default_metrics_filename)
    summary_filename: str = Field(default_factory=_default_summary_filename)

    # Execution
    threads: int = Field(default_factory=_default_threads, ge=1)
    log_level: str = Field(default_factory=_default_log_level)

    # Estimation
    hessian_power_iterations: int = Field(default_factory=_default_hessian_power_iterations, ge=1)
    lmax_power_iterations: int = Field(default_factory=_default_lmax_power_iterations, ge=1)
    lmax_inflation: float = Field(default_factory=_default_lmax_inflation, ge=1.0)
    hessian_max_probes: int = Field(default_factory=_default_hessian_max_probes, ge=1)
    hessian_max_pairs: int = Field(default_factory=_default_hessian_max_pairs, ge=1)
    hessian_fd_step: float = Field(default_factory=_default_hessian_fd_step, gt=0.0)

    # Linear algebra limits
    max_dense_dim: int = Field(default_factory=_default_max_dense_dim, ge=1)
    rank_rtol: float = Field(default_factory=_default_rank_rtol, gt=0.0)

    # Baselines
    divergence_threshold: float = Field(default_factory=_default_divergence_threshold, gt=0.0)


settings = Settings()
