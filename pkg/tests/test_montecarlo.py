import csv
import io
import math

import numpy as np
import pytest

from oneshot_dpd.errors import DataError, DomainError
from oneshot_dpd.estimation import AffineConstraint, FitOptions, fit
from oneshot_dpd.model import TestPlan, evaluate_cells
from oneshot_dpd.montecarlo import (
    ContaminationSpec,
    SimConfig,
    StudyResult,
    contaminate,
    device_grid_study,
    level_power_study,
    replication_rng,
    rmse_study,
    sample_counts,
    simulate_statistics,
)

from .conftest import SIM_THETA

B0_NULL = AffineConstraint.fix({"b0": 0.8}, 1)


def test_contamination_arithmetic():
    out = contaminate(SIM_THETA, ContaminationSpec(degree=0.5625))
    assert out.flat[2] == pytest.approx(0.35, abs=1e-15)
    assert np.array_equal(np.delete(out.flat, 2), np.delete(SIM_THETA, 2))
    assert np.array_equal(contaminate(SIM_THETA, ContaminationSpec(degree=0.0)).flat, SIM_THETA)
    with pytest.raises(DomainError):
        ContaminationSpec(degree=-0.1)
    with pytest.raises(DataError):
        contaminate(SIM_THETA, ContaminationSpec(target_component=7, degree=0.1))


def test_degenerate_probabilities():
    design = TestPlan.from_arrays([1e-300, 1e300, 1.0], [0.0, 0.0, 1.0], [50, 50, 50])
    plan = sample_counts([0.0, 0.0, 3.0, 0.0], design, replication_rng(1, 0))
    assert plan.failures[0] == 0 and plan.failures[1] == 50


def test_binomial_mean(sim_design):
    probs = evaluate_cells(SIM_THETA, sim_design).fail
    reps = 10000
    total = np.zeros(len(sim_design))
    for rep in range(reps):
        total += sample_counts(SIM_THETA, sim_design, replication_rng(2, rep)).failures
    mean = total / reps
    se = np.sqrt(sim_design.devices * probs * (1 - probs) / reps)
    assert np.all(np.abs(mean - sim_design.devices * probs) < 3 * se)


def test_contaminated_conditions_only(sim_design):
    spec = ContaminationSpec(degree=0.9)
    a = sample_counts(SIM_THETA, sim_design, replication_rng(3, 0))
    b = sample_counts(SIM_THETA, sim_design, replication_rng(3, 0), spec)
    assert np.array_equal(a.failures[1:], b.failures[1:])
    # b0 shrinks, so the shape drops and the early-time failure probability rises
    assert b.failures[0] >= a.failures[0]


def test_streams_are_reproducible_and_distinct():
    a = replication_rng(9, 4).random(5)
    assert np.array_equal(a, replication_rng(9, 4).random(5))
    assert not np.array_equal(a, replication_rng(9, 5).random(5))
    assert not np.array_equal(a, replication_rng(10, 4).random(5))


def test_single_replication_rmse_is_abs_error(sim_design):
    cfg = SimConfig(sim_design, SIM_THETA, gammas=(0.3,), replications=1, seed=5)
    res = rmse_study(cfg)
    plan = sample_counts(SIM_THETA, sim_design, replication_rng(5, 0))
    est = fit(plan, 0.3, FitOptions(initial_theta=tuple(SIM_THETA), multistart_count=0))
    for j, name in enumerate(("a0", "a1", "b0", "b1")):
        assert res.value(f"rmse_{name}", 0.3) == pytest.approx(abs(est.theta[j] - SIM_THETA[j]), rel=1e-12)


def test_rmse_study_reproducible_and_accounted(sim_design):
    cfg = SimConfig(sim_design, SIM_THETA, gammas=(0.0, 1.0), replications=6, seed=8)
    a, b = rmse_study(cfg, degrees=(0.0, 0.5)), rmse_study(cfg, degrees=(0.0, 0.5))
    assert a.rows == b.rows
    assert len(a.rows) == 2 * 2 * 4
    for r in a.rows:
        assert r["replications"] == 6 and 0 <= r["excluded"] <= 6
        assert math.isfinite(r["value"]) or r["excluded"] == 6


def test_statistics_keys_and_exclusions(sim_design):
    cfg = SimConfig(sim_design, SIM_THETA, gammas=(0.0, 0.5), replications=5, seed=3)
    stats = simulate_statistics(cfg, B0_NULL, degrees=(0.0, 0.4), tests=("wald", "rao"))
    assert set(stats) == {(t, g, d) for t in ("wald", "rao") for g in (0.0, 0.5) for d in (0.0, 0.4)}
    for s in stats.values():
        assert s.shape == (5,)
        assert np.all(np.isnan(s) | (s >= 0))


def test_level_power_rows(sim_design):
    cfg = SimConfig(sim_design, SIM_THETA, gammas=(0.2,), replications=8, seed=4)
    res = level_power_study(cfg, B0_NULL, alt_value=0.35, degrees=(0.0,))
    level = res.value("level", 0.2, test="wald")
    power = res.value("power", 0.2, test="wald")
    assert 0 <= level <= 1 and 0 <= power <= 1
    assert power >= level
    with pytest.raises(KeyError):
        res.value("power", 0.4, test="wald")


def test_scalar_generating_value_needs_single_fix(sim_design):
    cfg = SimConfig(sim_design, SIM_THETA, gammas=(0.2,), replications=1)
    two = AffineConstraint([[0, 0, 1, 0], [0, 0, 0, 1]], [0.8, 0.4])
    with pytest.raises(DataError):
        simulate_statistics(cfg, two, 0.35)
    with pytest.raises(DataError):
        simulate_statistics(cfg, B0_NULL, tests=("score",))


def test_device_grid(sim_design):
    cfg = SimConfig(sim_design, SIM_THETA, gammas=(0.0,), replications=3, seed=6)
    res = device_grid_study(cfg, B0_NULL, 0.35, device_grid=(20, 40))
    assert {r["devices"] for r in res.rows} == {20, 40}
    assert {r["metric"] for r in res.rows} >= {"rmse_b0", "level", "power"}


def test_csv_round_trip():
    res = StudyResult()
    res.rows.append({"study": "rmse", "test": "", "gamma": 0.1, "degree": 0.0, "devices": 100,
                     "metric": "rmse_b0", "value": 1 / 3, "replications": 5, "excluded": 0})
    rows = list(csv.DictReader(io.StringIO(res.to_csv())))
    assert float(rows[0]["value"]) == 1 / 3 and rows[0]["metric"] == "rmse_b0"


def test_config_validation(sim_design):
    with pytest.raises(DataError):
        SimConfig(sim_design, SIM_THETA, replications=0)
    with pytest.raises(DataError):
        SimConfig(sim_design, [1.0, 2.0], replications=1)
    with pytest.raises(DataError):
        SimConfig(sim_design, SIM_THETA, contamination=ContaminationSpec(target_conditions={12}))
    with pytest.raises(DomainError):
        SimConfig(sim_design, SIM_THETA, gammas=(-1.0,))
