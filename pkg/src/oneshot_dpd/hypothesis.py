"""Wald-type and Rao-type tests for affine hypotheses, and a chi-square
goodness-of-fit test over the failure/survival cells of a plan.

Both parametric tests are referred to a chi-square law with ``r`` degrees of
freedom, ``r`` being the number of restrictions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.stats import chi2

from .asymptotics import asymptotic_cov, k_gamma, restricted_bundle, spd_inverse
from .divergence import check_gamma, estimating_vector
from .errors import DataError, DomainError
from .estimation import AffineConstraint, Estimate
from .model import TestPlan, ThetaVector, as_flat_theta, evaluate_cells

__all__ = ["TestOutcome", "DEFAULT_LEVELS", "wald_test", "rao_test", "gof_chisq", "chi2_sf"]

DEFAULT_LEVELS = (0.10, 0.05, 0.01)


def chi2_sf(statistic: float, dof: int) -> float:
    """Upper tail probability of a chi-square law."""
    return float(chi2.sf(statistic, dof))


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    test: str
    statistic: float
    dof: int
    p_value: float
    gamma: float | None = None
    reject_at: dict[float, bool] = field(default_factory=dict)

    @classmethod
    def from_statistic(cls, test: str, statistic: float, dof: int, gamma=None,
                       levels=DEFAULT_LEVELS) -> "TestOutcome":
        if dof <= 0:
            raise DataError("degrees of freedom must be positive")
        stat = max(float(statistic), 0.0)
        p = chi2_sf(stat, dof)
        return cls(test, stat, int(dof), p, gamma, {float(a): decide(p, a) for a in levels})

    def as_dict(self) -> dict:
        return {
            "test": self.test,
            "gamma": self.gamma,
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "decisions": {repr(a): r for a, r in self.reject_at.items()},
        }


def decide(p_value: float, level: float) -> bool:
    """Reject at ``level``; a level of 1 rejects always."""
    if not 0.0 < level <= 1.0:
        raise DomainError(f"significance level must be in (0, 1], got {level}")
    return level >= 1.0 or p_value < level


def _quadratic(vec: np.ndarray, mat: np.ndarray, label: str) -> float:
    inv = spd_inverse(mat, label)
    return float(vec @ inv @ vec)


def wald_test(
    estimate: Estimate, plan: TestPlan, constraint: AffineConstraint,
    levels=DEFAULT_LEVELS,
) -> TestOutcome:
    """``W_K = K m^T (M^T Sigma M)^-1 m`` at the unrestricted estimate, ``m = L theta - c``."""
    if constraint.rank == 0:
        raise DataError("a Wald test needs at least one restriction")
    theta = estimate.theta_hat.flat
    sigma = asymptotic_cov(theta, plan, estimate.gamma).sigma
    m = constraint.residual(theta)
    big_m = constraint.matrix_L.T
    stat = plan.total_devices * _quadratic(m, big_m.T @ sigma @ big_m, "M^T Sigma M")
    return TestOutcome.from_statistic("wald", stat, constraint.rank, estimate.gamma, levels)


def rao_test(
    restricted: Estimate | ThetaVector | ArrayLike,
    plan: TestPlan,
    gamma: float,
    constraint: AffineConstraint,
    levels=DEFAULT_LEVELS,
) -> TestOutcome:
    """Score-type test built only from the restricted estimate.

    With ``u = U_gamma / K`` the normalised estimating vector,
    ``R_K = K u^T Q (Q^T K_gamma Q)^-1 Q^T u``. For a simple null the
    restricted estimate is the hypothesised point and no fit is needed.
    """
    g = check_gamma(gamma)
    if constraint.rank == 0:
        raise DataError("a Rao test needs at least one restriction")
    theta = restricted.theta_hat.flat if isinstance(restricted, Estimate) else as_flat_theta(
        restricted, plan.n_params
    )
    if np.max(np.abs(constraint.residual(theta))) > 1e-8 * max(1.0, np.max(np.abs(theta))):
        raise DataError("the restricted estimate does not satisfy the constraint")
    bundle = restricted_bundle(theta, plan, g, constraint)
    k = plan.total_devices
    qtu = bundle.q_mat.T @ (estimating_vector(theta, plan, g) / k)
    inner = bundle.q_mat.T @ k_gamma(theta, plan, g) @ bundle.q_mat
    stat = k * _quadratic(qtu, inner, "Q^T K_gamma Q")
    return TestOutcome.from_statistic("rao", stat, constraint.rank, g, levels)


def gof_cells(theta: ThetaVector | ArrayLike, plan: TestPlan) -> tuple[np.ndarray, np.ndarray]:
    """Observed counts and plan-wide cell probabilities, failure and survival cells interleaved."""
    if not plan.has_failures:
        raise DataError("goodness of fit needs observed failures")
    cells = evaluate_cells(theta, plan)
    share = plan.devices / plan.total_devices
    probs = np.column_stack([share * cells.fail, share * cells.survive]).ravel()
    observed = np.column_stack([plan.failures, plan.devices - plan.failures]).ravel()
    return observed, probs


def gof_chisq(theta: ThetaVector | ArrayLike, plan: TestPlan, levels=DEFAULT_LEVELS) -> TestOutcome:
    """Pearson statistic over the ``2I`` cells with ``dof = 2I - (dim theta - 1)``.

    Each cell probability is the model probability times the condition's share
    of devices, so the ``2I`` probabilities sum to one.
    """
    observed, probs = gof_cells(theta, plan)
    if np.any(probs <= 0):
        bad = int(np.flatnonzero(probs <= 0)[0])
        raise DataError(f"cell {bad} has zero model probability")
    expected = plan.total_devices * probs
    stat = float(np.sum((observed - expected) ** 2 / expected))
    dof = observed.size - (plan.n_params - 1)
    return TestOutcome.from_statistic("gof", stat, dof, None, levels)
