"""Regularized least-squares subproblem solved once per outer iteration.

Psi(v) = Phi(v) + reg/2 ||v||^2 with
Phi(v) = 1/2 (1/n) sum_i || eta H_i v - alpha_i g_i ||^2,
so grad Psi(v) = A v - b where
A = (1/n) sum_i eta^2 H_i^T H_i + reg I and b = (1/n) sum_i alpha_i eta H_i^T g_i.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.composite_opt.config import settings
from src.composite_opt.core.errors import (
    AssemblyError,
    ContractViolation,
    FactorizationError,
    SubproblemTooLarge,
)
from src.composite_opt.core.linalg import largest_eigenvalue_spd

logger = logging.getLogger(__name__)


class StepRule(str, Enum):
    ESTIMATED = "estimated"
    ANALYTIC = "analytic"


@dataclass(frozen=True, eq=False)
class SubproblemInput:
    jacobians: np.ndarray
    grads: np.ndarray
    eta: float
    alphas: np.ndarray
    reg: float

    def __post_init__(self) -> None:
        jacobians = np.asarray(self.jacobians, dtype=float)
        grads = np.asarray(self.grads, dtype=float)
        alphas = np.asarray(self.alphas, dtype=float)
        if jacobians.ndim != 3 or jacobians.shape[0] < 1:
            raise ContractViolation("jacobians", "(n, c, d) with n >= 1", jacobians.shape)
        n, c, _ = jacobians.shape
        if grads.shape != (n, c):
            raise ContractViolation("grads", (n, c), grads.shape)
        if alphas.shape != (n,):
            raise ContractViolation("alphas", (n,), alphas.shape)
        if self.eta <= 0.0 or np.any(alphas <= 0.0) or self.reg <= 0.0:
            raise ContractViolation("eta, alphas, reg", "all > 0", (self.eta, alphas.min(), self.reg))
        object.__setattr__(self, "jacobians", jacobians)
        object.__setattr__(self, "grads", grads)
        object.__setattr__(self, "alphas", alphas)

    @property
    def num_samples(self) -> int:
        return int(self.jacobians.shape[0])

    @property
    def dim(self) -> int:
        return int(self.jacobians.shape[2])


@dataclass(frozen=True, eq=False)
class SubproblemSystem:
    A: np.ndarray
    b: np.ndarray
    reg: float

    @property
    def dim(self) -> int:
        return int(self.b.size)


@dataclass(frozen=True)
class SolveCertificate:
    """Computable proof of ||v - v*_reg|| <= distance_bound by reg-strong convexity."""

    grad_norm: float
    distance_bound: float
    iterations: int
    step_size: float
    tolerance: float
    satisfied: bool


class DirectionBound(NamedTuple):
    phi_at_vreg: float
    norm_sq: float
    V_implied: float


def _check_direction(dim: int, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (dim,):
        raise ContractViolation("direction v", (dim,), v.shape)
    return v


def assemble(problem: SubproblemInput) -> SubproblemSystem:
    """Build A and b with a fixed left-to-right reduction over samples."""
    d = problem.dim
    if d > settings.max_dense_dim:
        raise SubproblemTooLarge(d, settings.max_dense_dim)
    n = problem.num_samples
    eta = problem.eta
    gram = np.zeros((d, d))
    rhs = np.zeros(d)
    for i in range(n):
        jac = problem.jacobians[i]
        term_b = problem.alphas[i] * (jac.T @ problem.grads[i])
        if not (np.all(np.isfinite(jac)) and np.all(np.isfinite(term_b))):
            raise AssemblyError(i)
        gram += jac.T @ jac
        rhs += term_b
    A = (eta * eta / n) * gram
    # exact symmetry regardless of BLAS rounding
    A = 0.5 * (A + A.T)
    A[np.diag_indices_from(A)] += problem.reg
    b = (eta / n) * rhs
    return SubproblemSystem(A=A, b=b, reg=problem.reg)


def phi_value(problem: SubproblemInput, v) -> float:
    """Phi(v) = 1/2 (1/n) sum_i ||eta H_i v - alpha_i g_i||^2."""
    v = _check_direction(problem.dim, v)
    residuals = problem.eta * (problem.jacobians @ v) - problem.alphas[:, None] * problem.grads
    return 0.5 * float(np.sum(residuals * residuals)) / problem.num_samples


def psi_value(problem: SubproblemInput, v) -> float:
    v = _check_direction(problem.dim, v)
    return phi_value(problem, v) + 0.5 * problem.reg * float(v @ v)


def psi_grad(system: SubproblemSystem, v) -> np.ndarray:
    """A v - b."""
    v = _check_direction(system.dim, v)
    return system.A @ v - system.b


def solve_closed_form(system: SubproblemSystem) -> np.ndarray:
    """Unique minimizer v*_reg = A^{-1} b via Cholesky."""
    try:
        factor = cho_factor(system.A, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise FactorizationError(system.reg, str(exc)) from exc
    return cho_solve(factor, system.b)


def analytic_smoothness(D: float, H: float, reg: float) -> float:
    """L = D^2 H^2 + reg, the inner-problem smoothness under the Jacobian bound."""
    return D * D * H * H + reg


def solve_inner_gd(
    problem: SubproblemInput,
    system: SubproblemSystem,
    tol_eps: float,
    max_iters: int,
    *,
    step_rule: StepRule = StepRule.ESTIMATED,
    analytic_L: Optional[float] = None,
    warm_start: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, SolveCertificate]:
    """
    Gradient descent on Psi with step 1/L from v0 = 0 (or ``warm_start``).

    Stops once ||A v - b|| / reg <= tol_eps, which certifies
    ||v - v*_reg|| <= tol_eps. If ``max_iters`` runs out first the last iterate
    is returned with an unsatisfied certificate.
    """
    if tol_eps <= 0.0:
        raise ContractViolation("tol_eps", "> 0", tol_eps)
    if max_iters < 0:
        raise ContractViolation("max_iters", ">= 0", max_iters)
    if step_rule is StepRule.ANALYTIC:
        if analytic_L is None or analytic_L <= 0.0:
            raise ContractViolation("analytic_L", "> 0 for the analytic step rule", analytic_L)
        lipschitz = analytic_L
    else:
        lipschitz = settings.lmax_inflation * largest_eigenvalue_spd(
            system.A, settings.lmax_power_iterations, np.random.default_rng(0)
        )
    step = 1.0 / lipschitz
    reg = system.reg

    v = np.zeros(system.dim) if warm_start is None else _check_direction(system.dim, warm_start).copy()
    grad = system.A @ v - system.b
    grad_norm = float(np.linalg.norm(grad))
    iterations = 0
    while grad_norm / reg > tol_eps and iterations < max_iters:
        v -= step * grad
        grad = system.A @ v - system.b
        grad_norm = float(np.linalg.norm(grad))
        iterations += 1

    satisfied = grad_norm / reg <= tol_eps
    if not satisfied:
        logger.warning(
            f"[Subproblem] Inner GD stopped after {iterations} iterations without certificate "
            f"(bound {grad_norm / reg:.3e} > tol {tol_eps:.3e})"
        )
    certificate = SolveCertificate(
        grad_norm=grad_norm,
        distance_bound=grad_norm / reg,
        iterations=iterations,
        step_size=step,
        tolerance=tol_eps,
        satisfied=satisfied,
    )
    return v, certificate


def check_direction_bound(problem: SubproblemInput, v_reg, eps: float) -> DirectionBound:
    """
    Smallest V consistent with ||v_reg||^2 <= 2 + V and Phi(v_reg) <= (1 + V/2) eps^2.
    """
    v_reg = _check_direction(problem.dim, v_reg)
    phi = phi_value(problem, v_reg)
    norm_sq = float(v_reg @ v_reg)
    implied = max(norm_sq - 2.0, 2.0 * phi / (eps * eps) - 2.0, 0.0)
    return DirectionBound(phi_at_vreg=phi, norm_sq=norm_sq, V_implied=implied)
