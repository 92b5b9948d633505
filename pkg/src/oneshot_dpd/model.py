"""One-shot accelerated life-test data and the log-logistic lifetime model.

A test plan groups devices into conditions. Condition ``i`` puts ``K_i``
devices under the stress vector ``x_i`` (leading entry 1, the intercept) and
inspects them once at time ``tau_i``; only the number of failures ``n_i`` is
recorded. Lifetimes are log-logistic with

    alpha_i = exp(a . x_i),   beta_i = exp(b . x_i)

and the parameter vector is always laid out flat as ``(a_0..a_J, b_0..b_J)``.

Every power ``t**beta`` is evaluated in log space: with
``u = beta * (log t - log alpha)`` the cdf is ``expit(u)`` and the survival
function ``expit(-u)``, which never overflows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import expit, log_expit

from .errors import DataError, DomainError

__all__ = [
    "LinkedParams",
    "ProbPair",
    "TestCondition",
    "TestPlan",
    "ThetaVector",
    "as_flat_theta",
    "ll_pdf",
    "ll_cdf",
    "ll_survival",
    "ll_hazard",
    "ll_quantile",
    "mean_lifetime",
    "link",
    "cell_probs",
    "empirical_probs",
    "cdf_gradient",
    "evaluate_cells",
    "CellState",
]


@dataclass(frozen=True)
class LinkedParams:
    """Log-logistic parameters of one condition: median ``alpha``, shape ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be positive and finite, got {self.alpha}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise DomainError(f"beta must be positive and finite, got {self.beta}")


@dataclass(frozen=True)
class ProbPair:
    """Bernoulli probability vector (failed by tau, survived past tau)."""

    fail: float
    survive: float

    def __post_init__(self):
        for v in (self.fail, self.survive):
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"probabilities must lie in [0, 1], got {v}")
        if abs(self.fail + self.survive - 1.0) > 1e-12:
            raise DomainError("fail + survive must equal 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.fail, self.survive])


@dataclass(frozen=True)
class TestCondition:
    """One row of a one-shot test plan.

    ``stress`` includes the leading intercept entry. ``failures`` may be
    ``None`` for design templates that have not been observed yet.
    """

    __test__ = False  # not a pytest class

    tau: float
    stress: tuple[float, ...]
    devices: int
    failures: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "stress", tuple(float(s) for s in self.stress))
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise DataError(f"inspection time must be positive, got {self.tau}")
        if len(self.stress) == 0 or self.stress[0] != 1.0:
            raise DataError("stress vector must start with the intercept entry 1")
        if not all(np.isfinite(self.stress)):
            raise DataError("stress values must be finite")
        if int(self.devices) != self.devices or self.devices <= 0:
            raise DataError(f"devices must be a positive integer, got {self.devices}")
        object.__setattr__(self, "devices", int(self.devices))
        if self.failures is not None:
            if not (0 <= self.failures <= self.devices):
                raise DataError(
                    f"failures must lie in [0, devices={self.devices}], got {self.failures}"
                )


@dataclass(frozen=True)
class TestPlan:
    """An ordered collection of test conditions sharing one stress dimension.

    ``fractional=True`` allows non-integer failure counts. It is used for
    population-level (expected count) plans, e.g. when evaluating an
    estimator functional at a contaminated distribution.
    """

    __test__ = False

    conditions: tuple[TestCondition, ...]
    fractional: bool = field(default=False, compare=False)

    def __post_init__(self):
        conds = tuple(self.conditions)
        object.__setattr__(self, "conditions", conds)
        if len(conds) == 0:
            raise DataError("a test plan needs at least one condition")
        width = len(conds[0].stress)
        for i, c in enumerate(conds):
            if len(c.stress) != width:
                raise DataError(
                    f"condition {i}: stress vector has length {len(c.stress)}, expected {width}"
                )
            if not self.fractional and c.failures is not None:
                if float(c.failures) != int(c.failures):
                    raise DataError(f"condition {i}: failures must be an integer")
        observed = [c.failures is not None for c in conds]
        if any(observed) and not all(observed):
            raise DataError("failures must be given for all conditions or for none")

    @classmethod
    def from_arrays(
        cls,
        tau: ArrayLike,
        covariates: ArrayLike,
        devices: ArrayLike,
        failures: ArrayLike | None = None,
        *,
        fractional: bool = False,
    ) -> "TestPlan":
        """Build a plan from column arrays.

        ``covariates`` holds the stress factors without the intercept, shape
        ``(I, J)``; a 1-d array is read as a single stress factor.
        """
        tau = np.asarray(tau, dtype=float).ravel()
        cov = np.asarray(covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(-1, 1) if cov.size else np.zeros((tau.size, 0))
        devices = np.asarray(devices).ravel()
        if cov.shape[0] != tau.size or devices.size != tau.size:
            raise DataError("tau, covariates and devices must have the same number of rows")
        fails = None if failures is None else np.asarray(failures, dtype=float).ravel()
        if fails is not None and fails.size != tau.size:
            raise DataError("failures must have one entry per condition")
        conds = []
        for i in range(tau.size):
            n_i = None
            if fails is not None:
                n_i = float(fails[i]) if fractional else _as_count(fails[i], i)
            conds.append(TestCondition(float(tau[i]), (1.0, *cov[i]), devices[i], n_i))
        return cls(tuple(conds), fractional=fractional)

    @property
    def stress_dim(self) -> int:
        """Number of stress factors J (the intercept is not counted)."""
        return len(self.conditions[0].stress) - 1

    @property
    def n_params(self) -> int:
        return 2 * (self.stress_dim + 1)

    @property
    def has_failures(self) -> bool:
        return self.conditions[0].failures is not None

    @cached_property
    def tau(self) -> np.ndarray:
        return np.array([c.tau for c in self.conditions])

    @cached_property
    def design(self) -> np.ndarray:
        """Stress matrix with intercept column, shape ``(I, J+1)``."""
        return np.array([c.stress for c in self.conditions])

    @cached_property
    def devices(self) -> np.ndarray:
        return np.array([c.devices for c in self.conditions], dtype=float)

    @cached_property
    def failures(self) -> np.ndarray:
        if not self.has_failures:
            raise DataError("this plan has no observed failures")
        return np.array([c.failures for c in self.conditions], dtype=float)

    @property
    def total_devices(self) -> float:
        return float(self.devices.sum())

    @property
    def weights(self) -> np.ndarray:
        """Device shares ``K_i / K``."""
        return self.devices / self.devices.sum()

    def with_failures(self, failures: ArrayLike, *, fractional: bool | None = None) -> "TestPlan":
        """Return a copy of this plan with new failure counts."""
        frac = self.fractional if fractional is None else fractional
        return TestPlan.from_arrays(
            self.tau, self.design[:, 1:], self.devices, failures, fractional=frac
        )

    def without_failures(self) -> "TestPlan":
        return TestPlan.from_arrays(self.tau, self.design[:, 1:], self.devices)

    def __len__(self) -> int:
        return len(self.conditions)


def _as_count(value: float, row: int) -> int:
    if not np.isfinite(value) or float(value) != int(value):
        raise DataError(f"condition {row}: failures must be an integer, got {value}")
    return int(value)


@dataclass(frozen=True)
class ThetaVector:
    """Model parameters split into scale coefficients ``a`` and shape coefficients ``b``."""

    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.a) != len(self.b) or len(self.a) == 0:
            raise DomainError("a and b must be non-empty and of equal length")

    @classmethod
    def from_flat(cls, flat: ArrayLike) -> "ThetaVector":
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.size % 2 or flat.size == 0:
            raise DomainError(f"flat theta must have even positive length, got {flat.size}")
        half = flat.size // 2
        return cls(tuple(flat[:half]), tuple(flat[half:]))

    @property
    def flat(self) -> np.ndarray:
        return np.array(self.a + self.b)

    @property
    def stress_dim(self) -> int:
        return len(self.a) - 1

    def names(self) -> list[str]:
        return component_names(self.stress_dim)


def component_names(stress_dim: int) -> list[str]:
    """Names ``a0..aJ, b0..bJ`` in canonical order."""
    return [f"a{j}" for j in range(stress_dim + 1)] + [f"b{j}" for j in range(stress_dim + 1)]


def as_flat_theta(theta: ThetaVector | ArrayLike, n_params: int | None = None) -> np.ndarray:
    """Coerce ``theta`` to a flat float array and check its length."""
    flat = theta.flat if isinstance(theta, ThetaVector) else np.asarray(theta, dtype=float).ravel()
    if n_params is not None and flat.size != n_params:
        raise DomainError(f"theta has {flat.size} components, expected {n_params}")
    return flat


# -- distribution core ------------------------------------------------------


def _positive_times(t: ArrayLike) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("lifetime argument must be strictly positive")
    return t


def _log_odds(t: np.ndarray, p: LinkedParams) -> np.ndarray:
    return p.beta * (np.log(t) - np.log(p.alpha))


def ll_cdf(t: ArrayLike, p: LinkedParams):
    """Log-logistic cdf ``t^b / (t^b + a^b)``."""
    t = _positive_times(t)
    return expit(_log_odds(t, p))


def ll_survival(t: ArrayLike, p: LinkedParams):
    """Reliability ``a^b / (t^b + a^b)``."""
    t = _positive_times(t)
    return expit(-_log_odds(t, p))


def ll_pdf(t: ArrayLike, p: LinkedParams):
    """Log-logistic density ``b a^b t^(b-1) / (t^b + a^b)^2``.

    Computed as ``(b / t) F(t) R(t)``.
    """
    t = _positive_times(t)
    u = _log_odds(t, p)
    return p.beta / t * np.exp(log_expit(u) + log_expit(-u))


def ll_hazard(t: ArrayLike, p: LinkedParams):
    """Hazard rate ``pdf / survival = (b / t) F(t)``."""
    t = _positive_times(t)
    return p.beta / t * expit(_log_odds(t, p))


def ll_quantile(u: ArrayLike, p: LinkedParams):
    """Inverse cdf ``alpha (u / (1 - u))^(1/beta)``."""
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile level must lie strictly inside (0, 1)")
    return p.alpha * np.exp((np.log(u) - np.log1p(-u)) / p.beta)


def mean_lifetime(p: LinkedParams) -> float:
    """Expected lifetime ``alpha (pi/beta) / sin(pi/beta)``; finite only for beta > 1."""
    if p.beta <= 1:
        raise DomainError(f"infinite mean lifetime: shape beta={p.beta} <= 1")
    r = np.pi / p.beta
    return float(p.alpha * r / np.sin(r))


# -- stress link and cell probabilities --------------------------------------


def link(theta: ThetaVector | ArrayLike, stress: Sequence[float]) -> LinkedParams:
    """Map parameters and a stress vector (intercept first) to ``(alpha, beta)``."""
    x = np.asarray(stress, dtype=float).ravel()
    flat = as_flat_theta(theta, 2 * x.size)
    if x[0] != 1.0:
        raise DomainError("stress vector must start with the intercept entry 1")
    half = x.size
    return LinkedParams(float(np.exp(flat[:half] @ x)), float(np.exp(flat[half:] @ x)))


def cell_probs(theta: ThetaVector | ArrayLike, c: TestCondition) -> ProbPair:
    p = link(theta, c.stress)
    u = _log_odds(np.float64(c.tau), p)
    return ProbPair(float(expit(u)), float(expit(-u)))


def empirical_probs(c: TestCondition) -> ProbPair:
    if c.failures is None:
        raise DataError("condition has no observed failures")
    frac = c.failures / c.devices
    return ProbPair(frac, 1.0 - frac)


def cdf_gradient(theta: ThetaVector | ArrayLike, c: TestCondition) -> np.ndarray:
    """Gradient of ``F(tau)`` with respect to the flat parameter vector.

    ``dF/da_j = -F R beta x_j`` and ``dF/db_j = F R log(tau/alpha) beta x_j``.
    """
    x = np.asarray(c.stress)
    p = link(theta, x)
    log_ratio = np.log(c.tau) - np.log(p.alpha)
    u = p.beta * log_ratio
    fr = float(np.exp(log_expit(u) + log_expit(-u)))
    return fr * np.concatenate([-p.beta * x, p.beta * log_ratio * x])


class CellState(NamedTuple):
    """Vectorised per-condition quantities at one parameter value."""

    log_alpha: np.ndarray
    beta: np.ndarray
    u: np.ndarray  # beta * log(tau / alpha)
    log_f: np.ndarray
    log_r: np.ndarray
    direction: np.ndarray  # rows (-beta x, beta log(tau/alpha) x); dF/dtheta = F R * row

    @property
    def fail(self) -> np.ndarray:
        return np.exp(self.log_f)

    @property
    def survive(self) -> np.ndarray:
        return np.exp(self.log_r)

    @property
    def fr(self) -> np.ndarray:
        return np.exp(self.log_f + self.log_r)

    @property
    def grad_fail(self) -> np.ndarray:
        """Rows are ``dF_i / dtheta``."""
        return self.fr[:, None] * self.direction


def evaluate_cells(theta: ThetaVector | ArrayLike, plan: TestPlan) -> CellState:
    """Evaluate the link, cell log-probabilities and gradient directions for all conditions."""
    flat = as_flat_theta(theta, plan.n_params)
    x = plan.design
    half = x.shape[1]
    with np.errstate(over="ignore", invalid="ignore"):
        log_alpha = x @ flat[:half]
        beta = np.exp(x @ flat[half:])
        u = beta * (np.log(plan.tau) - log_alpha)
        log_f = log_expit(u)
        log_r = log_expit(-u)
        direction = np.hstack([-beta[:, None] * x, u[:, None] * x])
    return CellState(log_alpha, beta, u, log_f, log_r, direction)
