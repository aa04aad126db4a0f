from __future__ import annotations

from pathlib import Path
from typing import Optional


class CompositeOptError(Exception):
    """Base class for every error raised by the library."""


class ContractViolation(CompositeOptError):
    """Raised when an argument has the wrong shape or violates a precondition."""

    def __init__(self, what: str, expected: object, got: object):
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected {expected}, got {got}")


class NonFiniteError(CompositeOptError):
    """Raised when weights or intermediate values are NaN or infinite."""

    def __init__(self, what: str, sample_index: Optional[int] = None):
        self.what = what
        self.sample_index = sample_index
        location = f" (sample {sample_index})" if sample_index is not None else ""
        super().__init__(f"Non-finite {what}{location}")


class EstimationError(CompositeOptError):
    """Raised when an assumption-constant estimate hits a non-finite value."""

    def __init__(self, quantity: str, sample_index: int):
        self.quantity = quantity
        self.sample_index = sample_index
        super().__init__(f"Estimation of {quantity} failed at sample {sample_index}")


class AssemblyError(CompositeOptError):
    """Raised when a per-sample term of the subproblem is not finite."""

    def __init__(self, sample_index: int):
        self.sample_index = sample_index
        super().__init__(f"Subproblem assembly failed: non-finite term at sample {sample_index}")


class SubproblemTooLarge(CompositeOptError):
    """Raised when the dense subproblem would exceed the configured size."""

    def __init__(self, dim: int, limit: int):
        self.dim = dim
        self.limit = limit
        super().__init__(f"Refusing dense assembly for d={dim} (limit {limit})")


class FactorizationError(CompositeOptError):
    """Raised when the subproblem matrix is not numerically positive definite."""

    def __init__(self, reg: float, detail: str = ""):
        self.reg = reg
        super().__init__(
            f"Cholesky factorization failed (reg={reg:g}); "
            f"regularization too small or non-finite Jacobians. {detail}".strip()
        )


class ScheduleOverrun(CompositeOptError):
    """Raised when the learning-rate schedule is queried past T."""

    def __init__(self, t: int, horizon: int):
        self.t = t
        self.horizon = horizon
        super().__init__(f"Schedule queried at t={t} beyond horizon T={horizon}")


class DatasetLoadError(CompositeOptError):
    """Raised when a dataset file cannot be parsed or validated."""

    def __init__(self, path: Path | str, message: str, line: Optional[int] = None):
        self.path = Path(path)
        self.line = line
        location = f"{self.path}:{line}" if line is not None else f"{self.path}"
        super().__init__(f"{location}: {message}")


class ConfigError(CompositeOptError):
    """Raised when an experiment config file is malformed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class MetricsWriteError(CompositeOptError):
    """Raised when metrics or the run summary cannot be written."""

    def __init__(self, path: Path | str, cause: Exception):
        self.path = Path(path)
        self.cause = cause
        super().__init__(f"Could not write {self.path}: {cause}")
