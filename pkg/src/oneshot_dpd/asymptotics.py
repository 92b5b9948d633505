"""Asymptotic covariance of the weighted minimum DPD estimator and its
influence function.

All matrices use the canonical ``(a_0..a_J, b_0..b_J)`` ordering and the
normalisation in which ``sqrt(K) (theta_hat - theta_0)`` is asymptotically
``N(0, J^-1 K J^-1)``. Writing ``v_i = (-beta_i x_i, beta_i log(tau_i/alpha_i) x_i)``
and ``M_i = v_i v_i^T``:

    J_gamma = sum_i (K_i/K) M_i (F_i R_i)^2 (F_i^(g-1) + R_i^(g-1))
    K_gamma = sum_i (K_i/K) M_i (F_i R_i)^3 (F_i^(g-1) + R_i^(g-1))^2

Both weights are evaluated as ``F R (F^g R + R^g F)`` and
``F R (F^g R + R^g F)^2`` so boundary cells never divide by zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import cho_factor, cho_solve

from .divergence import check_gamma
from .errors import DataError, SingularMatrixError
from .model import TestCondition, TestPlan, ThetaVector, as_flat_theta, evaluate_cells, link

__all__ = [
    "CovarianceBundle",
    "RestrictedBundle",
    "condition_block_m",
    "j_gamma",
    "k_gamma",
    "fisher_info",
    "asymptotic_cov",
    "restricted_bundle",
    "influence_single",
    "influence_all",
    "spd_inverse",
    "MAX_CONDITION",
]

MAX_CONDITION = 1e12


def spd_inverse(mat: np.ndarray, label: str = "matrix") -> np.ndarray:
    """Invert a symmetric positive (semi)definite matrix via Cholesky.

    The matrix is first equilibrated by its diagonal, so the condition number
    checked against :data:`MAX_CONDITION` does not depend on parameter units.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return np.zeros_like(mat)
    if not np.all(np.isfinite(mat)):
        raise SingularMatrixError(f"{label} has non-finite entries")
    diag = np.diag(mat)
    if np.any(diag <= 0):
        raise SingularMatrixError(f"{label} is singular: zero or negative diagonal entry")
    scale = np.sqrt(diag)
    eq = mat / np.outer(scale, scale)
    eq = 0.5 * (eq + eq.T)
    cond = np.linalg.cond(eq)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularMatrixError(
            f"{label} is singular to working precision (condition number {cond:.3g}); "
            "the test design does not identify every parameter"
        )
    try:
        factor = cho_factor(eq)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"{label} is not positive definite") from exc
    inv = cho_solve(factor, np.eye(eq.shape[0]))
    inv = inv / np.outer(scale, scale)
    return 0.5 * (inv + inv.T)


def condition_block_m(theta: ThetaVector | ArrayLike, c: TestCondition) -> np.ndarray:
    """Outer product ``M_i`` of the stacked direction ``(-beta x, L beta x)``, ``L = log(tau/alpha)``."""
    x = np.asarray(c.stress)
    p = link(theta, x)
    log_ratio = np.log(c.tau) - np.log(p.alpha)
    v = np.concatenate([-p.beta * x, log_ratio * p.beta * x])
    return np.outer(v, v)


def _weighted_blocks(direction: np.ndarray, weights: np.ndarray) -> np.ndarray:
    out = (direction * weights[:, None]).T @ direction
    return 0.5 * (out + out.T)


def _dpd_weights(cells, g: float) -> tuple[np.ndarray, np.ndarray]:
    mixed = np.exp(g * cells.log_f + cells.log_r) + np.exp(g * cells.log_r + cells.log_f)
    fr = cells.fr
    return fr * mixed, fr * mixed**2


def j_gamma(theta: ThetaVector | ArrayLike, plan: TestPlan, gamma: float) -> np.ndarray:
    g = check_gamma(gamma)
    cells = evaluate_cells(theta, plan)
    wj, _ = _dpd_weights(cells, g)
    return _weighted_blocks(cells.direction, plan.weights * wj)


def k_gamma(theta: ThetaVector | ArrayLike, plan: TestPlan, gamma: float) -> np.ndarray:
    g = check_gamma(gamma)
    cells = evaluate_cells(theta, plan)
    _, wk = _dpd_weights(cells, g)
    return _weighted_blocks(cells.direction, plan.weights * wk)


def fisher_info(theta: ThetaVector | ArrayLike, plan: TestPlan) -> np.ndarray:
    """Fisher information of the whole experiment, ``sum_i K_i F_i R_i M_i``.

    It carries device counts ``K_i`` rather than shares, so it equals
    ``K * j_gamma(theta, plan, 0)``.
    """
    cells = evaluate_cells(theta, plan)
    return _weighted_blocks(cells.direction, plan.devices * cells.fr)


@dataclass(frozen=True)
class CovarianceBundle:
    j_mat: np.ndarray
    k_mat: np.ndarray
    sigma: np.ndarray
    total_devices: float

    @property
    def std_errors(self) -> np.ndarray:
        """Standard errors of the estimator: ``sqrt(diag(sigma) / K)``."""
        return np.sqrt(np.clip(np.diag(self.sigma), 0.0, None) / self.total_devices)


@dataclass(frozen=True)
class RestrictedBundle:
    q_mat: np.ndarray
    p_mat: np.ndarray
    sigma_restricted: np.ndarray


def asymptotic_cov(theta: ThetaVector | ArrayLike, plan: TestPlan, gamma: float) -> CovarianceBundle:
    """Sandwich covariance ``J^-1 K J^-1`` of ``sqrt(K) (theta_hat - theta_0)``."""
    jm = j_gamma(theta, plan, gamma)
    km = k_gamma(theta, plan, gamma)
    j_inv = spd_inverse(jm, "J_gamma")
    sigma = j_inv @ km @ j_inv
    return CovarianceBundle(jm, km, 0.5 * (sigma + sigma.T), plan.total_devices)


def restricted_bundle(
    theta: ThetaVector | ArrayLike, plan: TestPlan, gamma: float, constraint
) -> RestrictedBundle:
    """``Q``, ``P`` and the covariance ``P K P^T`` of the restricted estimator.

    ``constraint`` is an affine restriction ``L theta = c``; its Jacobian
    ``M`` is ``L^T``.
    """
    jm = j_gamma(theta, plan, gamma)
    km = k_gamma(theta, plan, gamma)
    j_inv = spd_inverse(jm, "J_gamma")
    m = np.asarray(constraint.matrix_L, dtype=float).T
    if m.shape[0] != jm.shape[0]:
        raise DataError("constraint dimension does not match theta")
    if m.shape[1] == 0:
        q = np.zeros((jm.shape[0], 0))
        p = j_inv
    else:
        inner = spd_inverse(m.T @ j_inv @ m, "M^T J^-1 M")
        q = j_inv @ m @ inner
        p = j_inv - q @ m.T @ j_inv
    sigma_r = p @ km @ p.T
    return RestrictedBundle(q, p, 0.5 * (sigma_r + sigma_r.T))


def _influence_terms(theta, plan: TestPlan, g: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cells = evaluate_cells(theta, plan)
    wj, _ = _dpd_weights(cells, g)
    j_inv = spd_inverse(_weighted_blocks(cells.direction, plan.weights * wj), "J_gamma")
    # grad F * (F^(g-1) + R^(g-1)) == direction * (F^g R + R^g F)
    mixed = np.exp(g * cells.log_f + cells.log_r) + np.exp(g * cells.log_r + cells.log_f)
    lead = (plan.weights * mixed)[:, None] * cells.direction
    return j_inv, lead, cells.fail


def _check_outcome(value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise DataError(f"outcome must be 0 (survived) or 1 (failed), got {value}")
    return value


def influence_single(
    theta: ThetaVector | ArrayLike,
    plan: TestPlan,
    gamma: float,
    cond_index: int,
    outcome: float,
) -> np.ndarray:
    """Influence of contaminating condition ``cond_index`` with one outcome.

    ``outcome`` is 1 for a failure observed by the inspection time and 0 for a
    survivor; a value in between is read as the probability of a failure.
    The result is the derivative of the estimator functional in the direction
    of that point mass:

        J^-1 (K_i0/K) (F^(g-1) + R^(g-1)) dF/dtheta (outcome - F)
    """
    g = check_gamma(gamma)
    if not 0 <= cond_index < len(plan):
        raise DataError(f"condition index {cond_index} out of range")
    delta = _check_outcome(outcome)
    j_inv, lead, fail = _influence_terms(as_flat_theta(theta, plan.n_params), plan, g)
    return j_inv @ (lead[cond_index] * (delta - fail[cond_index]))


def influence_all(
    theta: ThetaVector | ArrayLike, plan: TestPlan, gamma: float, outcomes: ArrayLike
) -> np.ndarray:
    """Influence of contaminating every condition at once, one outcome per condition."""
    g = check_gamma(gamma)
    deltas = np.array([_check_outcome(v) for v in np.ravel(outcomes)])
    if deltas.size != len(plan):
        raise DataError("one outcome per condition is required")
    j_inv, lead, fail = _influence_terms(as_flat_theta(theta, plan.n_params), plan, g)
    return j_inv @ ((deltas - fail) @ lead)
