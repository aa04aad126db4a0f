"""Power-iteration helpers shared by the estimators and the inner solver."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np


def _unit_start(dim: int, rng: Optional[np.random.Generator]) -> np.ndarray:
    rng = rng if rng is not None else np.random.default_rng(0)
    start = rng.standard_normal(dim)
    return start / np.linalg.norm(start)


def operator_norm_symmetric(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    iterations: int,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Largest |eigenvalue| of a symmetric operator given matrix-free.

    Returns ||M v_k|| for the last normalized iterate, which converges to the
    spectral norm even when +lambda and -lambda share the top magnitude.
    """
    if dim == 0:
        return 0.0
    vec = _unit_start(dim, rng)
    estimate = 0.0
    for _ in range(iterations):
        image = apply(vec)
        estimate = float(np.linalg.norm(image))
        if estimate == 0.0 or not np.isfinite(estimate):
            return estimate
        vec = image / estimate
    return estimate


def largest_eigenvalue_spd(matrix: np.ndarray, iterations: int, rng: Optional[np.random.Generator] = None) -> float:
    """Largest eigenvalue of a symmetric positive semi-definite matrix."""
    return operator_norm_symmetric(lambda v: matrix @ v, matrix.shape[0], iterations, rng)


def spectral_norm(matrix: np.ndarray, iterations: int, rng: Optional[np.random.Generator] = None) -> float:
    """||M||_2 via power iteration on the smaller of M M^T and M^T M."""
    if matrix.size == 0:
        return 0.0
    rows, cols = matrix.shape
    if rows <= cols:
        top = operator_norm_symmetric(lambda v: matrix @ (matrix.T @ v), rows, iterations, rng)
    else:
        top = operator_norm_symmetric(lambda v: matrix.T @ (matrix @ v), cols, iterations, rng)
    return float(np.sqrt(top))
