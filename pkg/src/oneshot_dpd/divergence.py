"""Divergences between observed and modelled Bernoulli cells, and the
weighted objective minimised by the estimators.

For a tuning parameter ``gamma > 0`` the density power divergence between
an empirical pair ``p`` and a model pair ``pi`` is

    sum_k pi_k^(g+1) - (g+1)/g * p_k pi_k^g + 1/g * p_k^(g+1)

and ``gamma == 0`` is the Kullback-Leibler divergence. The weighted objective
sums these over conditions with weights ``K_i / K`` after dropping the last,
data-only term; at ``gamma == 0`` it is exactly ``-log L(theta) / K``.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import xlogy

from .errors import DomainError, NumericalError
from .model import ProbPair, TestPlan, ThetaVector, evaluate_cells

__all__ = [
    "check_gamma",
    "kl_divergence",
    "dpd",
    "weighted_objective",
    "dropped_term",
    "weighted_divergence",
    "log_likelihood",
    "estimating_vector",
    "objective_and_score",
]


def check_gamma(gamma: float) -> float:
    """Validate a tuning parameter; 0 selects the likelihood/KL branch."""
    g = float(gamma)
    if not (np.isfinite(g) and g >= 0):
        raise DomainError(f"tuning parameter must be a finite non-negative number, got {gamma}")
    return g


def _pair(p: ProbPair | ArrayLike) -> np.ndarray:
    return p.as_array() if isinstance(p, ProbPair) else np.asarray(p, dtype=float)


def kl_divergence(p_hat: ProbPair | ArrayLike, pi: ProbPair | ArrayLike) -> float:
    """KL divergence with the convention ``0 log(0/pi) = 0``.

    Returns ``inf`` when a model cell is 0 while the matching empirical cell is not.
    """
    p, q = _pair(p_hat), _pair(pi)
    if np.any((q == 0) & (p > 0)):
        return math.inf
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def dpd(p_hat: ProbPair | ArrayLike, pi: ProbPair | ArrayLike, gamma: float) -> float:
    """Density power divergence between two Bernoulli pairs.

    ``gamma == 0`` is delegated to :func:`kl_divergence`, never evaluated as a limit.
    """
    g = check_gamma(gamma)
    if g == 0:
        return kl_divergence(p_hat, pi)
    p, q = _pair(p_hat), _pair(pi)
    value = (
        np.sum(q ** (g + 1))
        - (g + 1) / g * np.sum(p * q**g)
        + np.sum(p ** (g + 1)) / g
    )
    return float(max(value, 0.0))


def _empirical(plan: TestPlan) -> tuple[np.ndarray, np.ndarray]:
    p1 = plan.failures / plan.devices
    return p1, 1.0 - p1


def _objective_from_cells(cells, plan: TestPlan, g: float) -> float:
    w = plan.weights
    p1, p2 = _empirical(plan)
    if g == 0:
        # empty cells contribute 0 even where the model probability underflows
        per_cell = np.where(p1 > 0, -p1 * cells.log_f, 0.0) + np.where(
            p2 > 0, -p2 * cells.log_r, 0.0
        )
    else:
        f_g = np.exp(g * cells.log_f)
        r_g = np.exp(g * cells.log_r)
        per_cell = (
            f_g * np.exp(cells.log_f)
            + r_g * np.exp(cells.log_r)
            - (g + 1) / g * (p1 * f_g + p2 * r_g)
        )
    return float(w @ per_cell)


def weighted_objective(theta: ThetaVector | ArrayLike, plan: TestPlan, gamma: float) -> float:
    """Weighted divergence without its data-only term.

    The minimiser over ``theta`` is the weighted minimum DPD estimator; at
    ``gamma == 0`` the value equals ``-log L(theta) / K`` and may be ``inf``.
    """
    g = check_gamma(gamma)
    cells = evaluate_cells(theta, plan)
    with np.errstate(over="ignore", invalid="ignore"):
        value = _objective_from_cells(cells, plan, g)
    return value if not np.isnan(value) else math.inf


def dropped_term(plan: TestPlan, gamma: float) -> float:
    """The theta-free part of the weighted divergence left out of :func:`weighted_objective`."""
    g = check_gamma(gamma)
    p1, p2 = _empirical(plan)
    if g == 0:
        per_cell = xlogy(p1, p1) + xlogy(p2, p2)
    else:
        per_cell = (p1 ** (g + 1) + p2 ** (g + 1)) / g
    return float(plan.weights @ per_cell)


def weighted_divergence(theta: ThetaVector | ArrayLike, plan: TestPlan, gamma: float) -> float:
    """Full weighted divergence ``sum_i (K_i/K) D(p_i, pi_i(theta))``."""
    return weighted_objective(theta, plan, gamma) + dropped_term(plan, gamma)


def log_likelihood(theta: ThetaVector | ArrayLike, plan: TestPlan) -> float:
    """``sum_i n_i log F_i + (K_i - n_i) log R_i`` (no binomial coefficients)."""
    cells = evaluate_cells(theta, plan)
    n = plan.failures
    s = plan.devices - n
    return float(
        np.sum(np.where(n > 0, n * cells.log_f, 0.0)) + np.sum(np.where(s > 0, s * cells.log_r, 0.0))
    )


def _score_from_cells(cells, plan: TestPlan, g: float) -> np.ndarray:
    residual = plan.devices * cells.fail - plan.failures
    # F^g R + R^g F, the same as F R (F^(g-1) + R^(g-1))
    weight = np.exp(g * cells.log_f + cells.log_r) + np.exp(g * cells.log_r + cells.log_f)
    return (residual * weight) @ cells.direction


def estimating_vector(theta: ThetaVector | ArrayLike, plan: TestPlan, gamma: float) -> np.ndarray:
    """Estimating function ``U_gamma(theta)``.

    The gradient of :func:`weighted_objective` equals ``(gamma + 1) / K * U``.
    """
    g = check_gamma(gamma)
    cells = evaluate_cells(theta, plan)
    with np.errstate(over="ignore", invalid="ignore"):
        u = _score_from_cells(cells, plan, g)
    if not np.all(np.isfinite(u)):
        with np.errstate(over="ignore", invalid="ignore"):
            terms = (
                (plan.devices * cells.fail - plan.failures)[:, None] * cells.direction
            )
        bad = np.flatnonzero(~np.all(np.isfinite(terms), axis=1))
        where = f" at condition {int(bad[0])}" if bad.size else ""
        raise NumericalError(f"estimating vector is not finite{where}")
    return u


def objective_and_score(
    theta: np.ndarray, plan: TestPlan, gamma: float
) -> tuple[float, np.ndarray]:
    """Objective and ``U_gamma`` from a single cell evaluation.

    Non-finite values are returned as ``inf`` / ``nan`` rather than raised so
    that line searches can back off.
    """
    cells = evaluate_cells(theta, plan)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f = _objective_from_cells(cells, plan, gamma)
        u = _score_from_cells(cells, plan, gamma)
    if np.isnan(f):
        f = math.inf
    return f, u
