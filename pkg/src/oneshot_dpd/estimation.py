"""Weighted minimum DPD estimation, unrestricted and under affine restrictions.

Every fit minimises :func:`~oneshot_dpd.divergence.weighted_objective` with
BFGS over an affine parametrisation ``theta = offset + B z``:

* unrestricted fits use ``B`` = the map from standardised covariates back to
  the original ones, which keeps designs like ``x = 1/Temp`` well conditioned;
* restricted fits additionally restrict ``z`` to the null space of the
  constraint, so the search never leaves ``{theta : L theta = c}``.

The initial inverse Hessian is the inverse of the expected Hessian
``(gamma + 1) J_gamma`` at the start point.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import null_space
from scipy.stats import qmc

from .asymptotics import MAX_CONDITION, j_gamma
from .divergence import check_gamma, estimating_vector, objective_and_score
from .errors import DataError
from .model import TestPlan, ThetaVector, as_flat_theta, component_names
from .optimize import bfgs

__all__ = [
    "FitOptions",
    "AffineConstraint",
    "Estimate",
    "fit",
    "fit_mle",
    "fit_restricted",
    "standardizing_basis",
    "check_identifiable",
]

log = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 500
    grad_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    initial_theta: ThetaVector | tuple[float, ...] | None = None
    multistart_count: int = 4

    def __post_init__(self):
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if not (self.grad_tolerance > 0 and self.step_tolerance > 0):
            raise ValueError("tolerances must be positive")
        if self.multistart_count < 0:
            raise ValueError("multistart_count must be non-negative")


@dataclass(frozen=True)
class AffineConstraint:
    """Restriction ``L theta = c`` with ``L`` of full row rank ``r``."""

    matrix_L: np.ndarray
    target_c: np.ndarray

    def __post_init__(self):
        mat = np.atleast_2d(np.asarray(self.matrix_L, dtype=float))
        target = np.asarray(self.target_c, dtype=float).ravel()
        if mat.shape[0] != target.size:
            raise DataError("constraint matrix and target have different numbers of rows")
        if mat.shape[0] > 0:
            sv = np.linalg.svd(mat, compute_uv=False)
            if sv.size < mat.shape[0] or sv[-1] <= 1e-10 * max(sv[0], 1.0):
                raise DataError("constraint matrix must have full row rank")
        object.__setattr__(self, "matrix_L", mat)
        object.__setattr__(self, "target_c", target)

    @classmethod
    def none(cls, n_params: int) -> "AffineConstraint":
        return cls(np.zeros((0, n_params)), np.zeros(0))

    @classmethod
    def fix(cls, values: Mapping[str, float], stress_dim: int) -> "AffineConstraint":
        """Fix named components, e.g. ``{"b0": 0.8}``, to given values."""
        names = component_names(stress_dim)
        rows, target = [], []
        for name, value in values.items():
            if name not in names:
                raise DataError(f"unknown parameter {name!r}; expected one of {names}")
            row = np.zeros(len(names))
            row[names.index(name)] = 1.0
            rows.append(row)
            target.append(float(value))
        if not rows:
            return cls.none(len(names))
        return cls(np.array(rows), np.array(target))

    @property
    def rank(self) -> int:
        return self.matrix_L.shape[0]

    @property
    def n_params(self) -> int:
        return self.matrix_L.shape[1]

    def residual(self, theta: ThetaVector | ArrayLike) -> np.ndarray:
        """``m(theta) = L theta - c``."""
        return self.matrix_L @ as_flat_theta(theta, self.n_params) - self.target_c


@dataclass
class Estimate:
    theta_hat: ThetaVector
    gamma: float
    objective_value: float
    grad_norm: float
    converged: bool
    iterations: int
    lagrange_multipliers: np.ndarray | None = None
    rank_deficient: bool = False
    warnings: tuple[str, ...] = ()
    trace: list[float] = field(default_factory=list, repr=False)
    start_index: int = 0

    @property
    def theta(self) -> np.ndarray:
        return self.theta_hat.flat


def standardizing_basis(plan: TestPlan) -> np.ndarray:
    """Linear map ``theta = T z`` where ``z`` are coefficients of centred, scaled covariates."""
    x = plan.design
    width = x.shape[1]
    block = np.eye(width)
    for j in range(1, width):
        col = x[:, j]
        sd = col.std()
        if sd > 0:
            block[j, j] = 1.0 / sd
            block[0, j] = -col.mean() / sd
    t = np.zeros((2 * width, 2 * width))
    t[:width, :width] = block
    t[width:, width:] = block
    return t


def check_identifiable(plan: TestPlan) -> None:
    """Reject designs whose distinct stress vectors cannot identify the link coefficients."""
    distinct = np.unique(plan.design, axis=0)
    width = plan.design.shape[1]
    if distinct.shape[0] < width or np.linalg.matrix_rank(distinct) < width:
        raise DataError(
            f"the plan has {distinct.shape[0]} distinct stress vectors spanning rank "
            f"{np.linalg.matrix_rank(distinct)}; at least {width} independent ones are needed"
        )


def _halton_starts(count: int, dim: int) -> np.ndarray:
    if count == 0:
        return np.zeros((0, dim))
    sampler = qmc.Halton(d=dim, scramble=False)
    pts = sampler.random(count + 1)[1:]  # the first Halton point is the origin
    return -2.0 + 4.0 * pts


def _inverse_hessian_guess(theta, plan, g, basis) -> np.ndarray:
    h = (g + 1.0) * basis.T @ j_gamma(theta, plan, g) @ basis
    h = 0.5 * (h + h.T)
    vals, vecs = np.linalg.eigh(h)
    if not np.all(np.isfinite(vals)) or vals[-1] <= 0:
        return np.eye(basis.shape[1])
    floor = vals[-1] * 1e-10
    vals = np.maximum(vals, floor)
    return (vecs / vals) @ vecs.T


def _plan_warnings(plan: TestPlan) -> tuple[str, ...]:
    n, k = plan.failures, plan.devices
    if np.all((n == 0) | (n == k)):
        return ("every condition is at a boundary (no failures or all failures); "
                "the estimate may diverge",)
    return ()


def _is_rank_deficient(theta, plan, g) -> bool:
    jm = j_gamma(theta, plan, g)
    diag = np.diag(jm)
    if np.any(~np.isfinite(jm)) or np.any(diag <= 0):
        return True
    scale = np.sqrt(diag)
    cond = np.linalg.cond(jm / np.outer(scale, scale))
    return not (np.isfinite(cond) and cond <= MAX_CONDITION)


def _fit_affine(
    plan: TestPlan,
    g: float,
    offset: np.ndarray,
    basis: np.ndarray,
    projector: np.ndarray,
    opts: FitOptions,
) -> tuple[np.ndarray, float, float, bool, int, list[float], int]:
    """Run BFGS from every start over ``theta = offset + basis @ z``."""
    k = plan.total_devices
    dim = basis.shape[1]

    def evaluate(z):
        theta = offset + basis @ z
        f, u = objective_and_score(theta, plan, g)
        if not np.all(np.isfinite(u)):
            return math.inf, np.full(dim, np.nan), math.inf
        grad = (g + 1.0) / k * (basis.T @ u)
        return f, grad, float(np.max(np.abs(projector @ u))) if u.size else 0.0

    if opts.initial_theta is not None:
        theta0 = as_flat_theta(opts.initial_theta, plan.n_params)
        z0 = np.linalg.lstsq(basis, theta0 - offset, rcond=None)[0]
    else:
        z0 = np.linalg.lstsq(basis, -offset, rcond=None)[0]
    starts = np.vstack([z0, _halton_starts(opts.multistart_count, dim)])

    best = None
    for idx, z in enumerate(starts):
        theta_start = offset + basis @ z
        if not math.isfinite(objective_and_score(theta_start, plan, g)[0]):
            continue
        res = bfgs(
            evaluate,
            z,
            tol=opts.grad_tolerance,
            max_iter=opts.max_iterations,
            step_tol=opts.step_tolerance,
            inv_hess0=_inverse_hessian_guess(theta_start, plan, g, basis),
        )
        log.debug("start %d: f=%.12g stat=%.3g it=%d (%s)", idx, res.fun, res.stationarity,
                  res.iterations, res.message)
        cand = (res, idx)
        if best is None or _better(cand, best):
            best = cand
    if best is None:
        raise DataError("the objective is not finite at any starting point")
    res, idx = best
    theta = offset + basis @ res.x
    return theta, res.fun, res.stationarity, res.converged, res.iterations, res.trace, idx


def _better(cand, best) -> bool:
    # lower objective wins; within a tie a converged run beats an unconverged
    # one, otherwise the earlier start is kept
    (r1, _), (r2, _) = cand, best
    tie = TIE_TOLERANCE * max(1.0, abs(r2.fun))
    if abs(r1.fun - r2.fun) <= tie:
        return r1.converged and not r2.converged
    return r1.fun < r2.fun


def fit(plan: TestPlan, gamma: float, opts: FitOptions | None = None) -> Estimate:
    """Weighted minimum DPD estimate (``gamma == 0`` gives the MLE).

    A fit that does not reach ``grad_tolerance`` on ``max |U_gamma|`` is
    returned with ``converged=False``; it is never reported as a success.
    """
    opts = opts or FitOptions()
    g = check_gamma(gamma)
    check_identifiable(plan)
    d = plan.n_params
    theta, fval, stat, conv, iters, trace, idx = _fit_affine(
        plan, g, np.zeros(d), standardizing_basis(plan), np.eye(d), opts
    )
    return Estimate(
        theta_hat=ThetaVector.from_flat(theta),
        gamma=g,
        objective_value=fval,
        grad_norm=stat,
        converged=conv,
        iterations=iters,
        rank_deficient=_is_rank_deficient(theta, plan, g),
        warnings=_plan_warnings(plan),
        trace=trace,
        start_index=idx,
    )


def fit_mle(plan: TestPlan, opts: FitOptions | None = None) -> Estimate:
    """Maximum likelihood estimate; identical to ``fit(plan, 0.0, opts)``."""
    return fit(plan, 0.0, opts)


def _multipliers(theta, plan, g, constraint: AffineConstraint) -> np.ndarray:
    u = estimating_vector(theta, plan, g)
    return np.linalg.lstsq(constraint.matrix_L.T, -u, rcond=None)[0]


def fit_restricted(
    plan: TestPlan,
    gamma: float,
    constraint: AffineConstraint,
    opts: FitOptions | None = None,
) -> Estimate:
    """Restricted estimate minimising the objective subject to ``L theta = c``.

    Stationarity is measured on the component of ``U_gamma`` inside the null
    space of ``L``; the Lagrange multipliers solve ``U + L^T lambda = 0`` in
    the least-squares sense.
    """
    opts = opts or FitOptions()
    g = check_gamma(gamma)
    d = plan.n_params
    if constraint.n_params != d:
        raise DataError(f"constraint acts on {constraint.n_params} parameters, theta has {d}")
    if constraint.rank == 0:
        return fit(plan, g, opts)

    lmat, c = constraint.matrix_L, constraint.target_c
    if constraint.rank == d:
        theta = np.linalg.solve(lmat, c)
        f, _ = objective_and_score(theta, plan, g)
        return Estimate(
            theta_hat=ThetaVector.from_flat(theta),
            gamma=g,
            objective_value=f,
            grad_norm=0.0,
            converged=True,
            iterations=0,
            lagrange_multipliers=_multipliers(theta, plan, g, constraint),
            rank_deficient=False,
            warnings=_plan_warnings(plan),
            trace=[f],
        )

    check_identifiable(plan)
    t = standardizing_basis(plan)
    lz = lmat @ t
    z_particular = np.linalg.lstsq(lz, c, rcond=None)[0]
    offset = t @ z_particular
    basis = t @ null_space(lz)
    n_theta = null_space(lmat)
    projector = n_theta @ n_theta.T
    theta, fval, stat, conv, iters, trace, idx = _fit_affine(plan, g, offset, basis, projector, opts)
    # remove rounding drift off the constraint surface
    theta = theta - np.linalg.lstsq(lmat, lmat @ theta - c, rcond=None)[0]
    return Estimate(
        theta_hat=ThetaVector.from_flat(theta),
        gamma=g,
        objective_value=fval,
        grad_norm=stat,
        converged=conv,
        iterations=iters,
        lagrange_multipliers=_multipliers(theta, plan, g, constraint),
        rank_deficient=_is_rank_deficient(theta, plan, g),
        warnings=_plan_warnings(plan),
        trace=trace,
        start_index=idx,
    )
