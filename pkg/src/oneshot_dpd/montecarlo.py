"""Seeded Monte Carlo studies: RMSE under contamination, and empirical level
and power of the Wald-type and Rao-type tests.

Random numbers come from numpy's Philox counter-based generator, keyed by
``SeedSequence([seed, replication])``. Every replication therefore owns an
independent stream regardless of scheduling. Within a replication the same
uniforms are reused for every contamination degree, tuning parameter and
generating value (common random numbers), which makes comparisons across a
grid far less noisy than independent draws would.

Failure counts are built the way the model describes them, one Bernoulli
indicator per device: ``n_i = #{k : U_ik <= F_i}``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike

from .divergence import check_gamma
from .errors import DataError, DomainError, NumericalError
from .estimation import AffineConstraint, Estimate, FitOptions, fit, fit_restricted
from .hypothesis import TestOutcome, chi2_sf, decide, rao_test, wald_test
from .model import TestPlan, ThetaVector, as_flat_theta, component_names, evaluate_cells

__all__ = [
    "ContaminationSpec",
    "SimConfig",
    "StudyResult",
    "replication_rng",
    "sample_counts",
    "contaminate",
    "rmse_study",
    "level_power_study",
    "device_grid_study",
    "simulate_statistics",
    "DEFAULT_DEVICE_GRID",
]

log = logging.getLogger(__name__)

# not fixed by the source study; chosen here
DEFAULT_DEVICE_GRID = (50, 100, 200, 400)
RESULT_COLUMNS = ("study", "test", "gamma", "degree", "devices", "metric", "value",
                  "replications", "excluded")


@dataclass(frozen=True)
class ContaminationSpec:
    """Scale component ``target_component`` by ``1 - degree`` on ``target_conditions``."""

    target_component: int = 2
    target_conditions: frozenset[int] = frozenset({0})
    degree: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.degree) and self.degree >= 0):
            raise DomainError(f"contamination degree must be >= 0, got {self.degree}")
        object.__setattr__(self, "target_conditions", frozenset(int(i) for i in self.target_conditions))

    def with_degree(self, degree: float) -> "ContaminationSpec":
        return replace(self, degree=float(degree))


@dataclass(frozen=True)
class SimConfig:
    design: TestPlan
    theta_true: ThetaVector
    gammas: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    replications: int = 500
    seed: int = 20240521
    contamination: ContaminationSpec | None = None
    fit_options: FitOptions | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise DataError("replications must be at least 1")
        if not self.gammas:
            raise DataError("at least one tuning parameter is required")
        object.__setattr__(self, "gammas", tuple(check_gamma(g) for g in self.gammas))
        if not isinstance(self.theta_true, ThetaVector):
            object.__setattr__(self, "theta_true", ThetaVector.from_flat(self.theta_true))
        if self.theta_true.stress_dim != self.design.stress_dim:
            raise DataError("theta_true does not match the design's stress dimension")
        if not 0 <= self.seed < 2**64:
            raise DataError("seed must be a 64-bit unsigned integer")
        if self.contamination is not None:
            bad = [i for i in self.contamination.target_conditions if not 0 <= i < len(self.design)]
            if bad or not 0 <= self.contamination.target_component < self.design.n_params:
                raise DataError("contamination targets lie outside the design")

    @property
    def spec(self) -> ContaminationSpec:
        return self.contamination or ContaminationSpec()

    def degrees(self, degrees: Iterable[float] | None) -> tuple[float, ...]:
        if degrees is not None:
            return tuple(float(d) for d in degrees)
        return (self.contamination.degree if self.contamination else 0.0,)


@dataclass
class StudyResult:
    """Tidy result rows, one per (study, test, gamma, degree, devices, metric)."""

    rows: list[dict] = field(default_factory=list)

    def value(self, metric: str, gamma: float, degree: float = 0.0, *, test: str = "",
              devices: int | None = None) -> float:
        for r in self.rows:
            if (r["metric"] == metric and r["test"] == test and math.isclose(r["gamma"], gamma)
                    and math.isclose(r["degree"], degree)
                    and (devices is None or r["devices"] == devices)):
                return r["value"]
        raise KeyError((metric, test, gamma, degree, devices))

    def extend(self, other: "StudyResult") -> "StudyResult":
        self.rows.extend(other.rows)
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(rep)])))


def contaminate(theta: ThetaVector | ArrayLike, spec: ContaminationSpec) -> ThetaVector:
    """Return theta with the target component multiplied by ``1 - degree``."""
    flat = as_flat_theta(theta).copy()
    j = spec.target_component
    if not 0 <= j < flat.size:
        raise DataError(f"target component {j} outside theta of length {flat.size}")
    if spec.degree > 0 and flat[j] == 0:
        raise DomainError("a zero component cannot be contaminated by a relative deviation")
    flat[j] *= 1.0 - spec.degree
    return ThetaVector.from_flat(flat)


def _draw_uniforms(design: TestPlan, rng: np.random.Generator) -> list[np.ndarray]:
    return [rng.random(int(k)) for k in design.devices]


def _generating_probs(theta, design: TestPlan, spec: ContaminationSpec | None) -> np.ndarray:
    probs = evaluate_cells(theta, design).fail
    if spec is not None and spec.degree > 0 and spec.target_conditions:
        dirty = evaluate_cells(contaminate(theta, spec), design).fail
        idx = sorted(spec.target_conditions)
        probs = probs.copy()
        probs[idx] = dirty[idx]
    return probs


def _counts_from_uniforms(uniforms: list[np.ndarray], probs: np.ndarray) -> np.ndarray:
    return np.array([np.count_nonzero(u <= p) for u, p in zip(uniforms, probs)], dtype=float)


def sample_counts(
    theta: ThetaVector | ArrayLike,
    design: TestPlan,
    rng: np.random.Generator,
    contamination: ContaminationSpec | None = None,
) -> TestPlan:
    """Fill ``design`` with binomial failure counts, one Bernoulli draw per device.

    Conditions listed in ``contamination`` are generated from the contaminated
    theta, the others from ``theta`` itself.
    """
    probs = _generating_probs(theta, design, contamination)
    return design.with_failures(_counts_from_uniforms(_draw_uniforms(design, rng), probs))


def _sim_options(cfg: SimConfig) -> FitOptions:
    if cfg.fit_options is not None:
        return cfg.fit_options
    return FitOptions(initial_theta=cfg.theta_true, multistart_count=0)


def _fit_or_none(plan: TestPlan, g: float, opts: FitOptions, constraint=None) -> Estimate | None:
    # a failed start from theta_true gets one more chance with the default multistart
    for o in (opts, replace(opts, initial_theta=None, multistart_count=4)):
        try:
            est = fit(plan, g, o) if constraint is None else fit_restricted(plan, g, constraint, o)
        except (NumericalError, DataError):
            continue
        if est.converged:
            return est
    return None


def _rmse_rows(errors: np.ndarray, excluded: int, g, degree, devices, names, reps) -> list[dict]:
    rows = []
    kept = errors[~np.isnan(errors).any(axis=1)]
    for j, name in enumerate(names):
        value = float(np.sqrt(np.mean(kept[:, j] ** 2))) if kept.size else math.nan
        rows.append(_row("rmse", "", g, degree, devices, f"rmse_{name}", value, reps, excluded))
    return rows


def _row(study, test, g, degree, devices, metric, value, reps, excluded) -> dict:
    return {
        "study": study,
        "test": test,
        "gamma": float(g),
        "degree": float(degree),
        "devices": int(devices),
        "metric": metric,
        "value": float(value),
        "replications": int(reps),
        "excluded": int(excluded),
    }


def rmse_study(cfg: SimConfig, degrees: Sequence[float] | None = None) -> StudyResult:
    """Per-component RMSE of the estimator over replications.

    RMSE is the root of the mean squared deviation over the converged
    replications; failed fits are excluded and counted in ``excluded``.
    """
    degrees = cfg.degrees(degrees)
    spec = cfg.spec
    theta0 = cfg.theta_true.flat
    opts = _sim_options(cfg)
    names = component_names(cfg.design.stress_dim)
    errors = np.full((len(degrees), len(cfg.gammas), cfg.replications, theta0.size), np.nan)
    for rep in range(cfg.replications):
        uniforms = _draw_uniforms(cfg.design, replication_rng(cfg.seed, rep))
        for a, degree in enumerate(degrees):
            probs = _generating_probs(cfg.theta_true, cfg.design, spec.with_degree(degree))
            plan = cfg.design.with_failures(_counts_from_uniforms(uniforms, probs))
            for b, g in enumerate(cfg.gammas):
                est = _fit_or_none(plan, g, opts)
                if est is not None:
                    errors[a, b, rep] = est.theta_hat.flat - theta0
    out = StudyResult()
    devices = int(cfg.design.devices[0])
    for a, degree in enumerate(degrees):
        for b, g in enumerate(cfg.gammas):
            err = errors[a, b]
            excluded = int(np.isnan(err).any(axis=1).sum())
            out.rows.extend(_rmse_rows(err, excluded, g, degree, devices, names, cfg.replications))
    return out


def _generating_theta(cfg: SimConfig, constraint: AffineConstraint, value) -> ThetaVector:
    if value is None:
        return cfg.theta_true
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == cfg.design.n_params:
        return ThetaVector.from_flat(arr)
    if arr.size != 1 or constraint.rank != 1:
        raise DataError("a scalar generating value needs a single-row constraint")
    row = constraint.matrix_L[0]
    nz = np.flatnonzero(row)
    if nz.size != 1:
        raise DataError("a scalar generating value needs a constraint that fixes one component")
    flat = cfg.theta_true.flat.copy()
    flat[nz[0]] = arr[0]
    return ThetaVector.from_flat(flat)


def _run_test(kind: str, plan, g, constraint, opts) -> TestOutcome | None:
    try:
        if kind == "wald":
            est = _fit_or_none(plan, g, opts)
            return None if est is None else wald_test(est, plan, constraint)
        if kind == "rao":
            est = _fit_or_none(plan, g, opts, constraint)
            return None if est is None else rao_test(est, plan, g, constraint)
    except NumericalError:
        return None
    raise DataError(f"unknown test {kind!r}; expected 'wald' or 'rao'")


def simulate_statistics(
    cfg: SimConfig,
    constraint: AffineConstraint,
    generating_value=None,
    degrees: Sequence[float] | None = None,
    tests: Sequence[str] = ("wald",),
) -> dict[tuple[str, float, float], np.ndarray]:
    """Test statistics per replication, keyed by ``(test, gamma, degree)``.

    Excluded replications (failed fit or singular covariance) hold ``nan``.
    """
    degrees = cfg.degrees(degrees)
    theta_gen = _generating_theta(cfg, constraint, generating_value)
    opts = _sim_options(cfg)
    spec = cfg.spec
    out = {(t, g, d): np.full(cfg.replications, np.nan) for t in tests for g in cfg.gammas for d in degrees}
    for rep in range(cfg.replications):
        uniforms = _draw_uniforms(cfg.design, replication_rng(cfg.seed, rep))
        for d in degrees:
            probs = _generating_probs(theta_gen, cfg.design, spec.with_degree(d))
            plan = cfg.design.with_failures(_counts_from_uniforms(uniforms, probs))
            for g in cfg.gammas:
                for t in tests:
                    res = _run_test(t, plan, g, constraint, opts)
                    if res is not None:
                        out[(t, g, d)][rep] = res.statistic
    return out


def _rejection_rate(stats: np.ndarray, dof: int, alpha: float) -> tuple[float, int]:
    kept = stats[~np.isnan(stats)]
    excluded = stats.size - kept.size
    if kept.size == 0:
        return math.nan, excluded
    rejections = sum(decide(chi2_sf(s, dof), alpha) for s in kept)
    return rejections / kept.size, excluded


def level_power_study(
    cfg: SimConfig,
    constraint: AffineConstraint,
    null_value=None,
    alt_value=None,
    *,
    degrees: Sequence[float] | None = None,
    tests: Sequence[str] = ("wald",),
    alpha: float = 0.05,
) -> StudyResult:
    """Empirical level (data from ``null_value``) and power (data from ``alt_value``).

    ``null_value``/``alt_value`` are either a full theta or, for a constraint
    fixing one component, the value that component takes in the generating
    model. ``None`` for ``null_value`` means ``cfg.theta_true``; ``None`` for
    ``alt_value`` skips the power study.
    """
    out = StudyResult()
    devices = int(cfg.design.devices[0])
    for metric, value in (("level", null_value), ("power", alt_value)):
        if metric == "power" and value is None:
            continue
        stats = simulate_statistics(cfg, constraint, value, degrees, tests)
        for (t, g, d), s in stats.items():
            rate, excluded = _rejection_rate(s, constraint.rank, alpha)
            out.rows.append(_row(metric, t, g, d, devices, metric, rate, cfg.replications, excluded))
    return out


def device_grid_study(
    cfg: SimConfig,
    constraint: AffineConstraint,
    alt_value,
    device_grid: Sequence[int] = DEFAULT_DEVICE_GRID,
    *,
    alpha: float = 0.05,
) -> StudyResult:
    """RMSE, level and power under pure data for several devices-per-condition counts."""
    out = StudyResult()
    for k in device_grid:
        design = TestPlan.from_arrays(
            cfg.design.tau, cfg.design.design[:, 1:], np.full(len(cfg.design), int(k))
        )
        sub = replace(cfg, design=design, contamination=None)
        out.extend(rmse_study(sub, degrees=(0.0,)))
        out.extend(level_power_study(sub, constraint, None, alt_value, degrees=(0.0,), alpha=alpha))
    return out
