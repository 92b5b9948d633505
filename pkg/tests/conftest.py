import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oneshot_dpd.datasets import embedded_dataset
from oneshot_dpd.model import TestPlan

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SIM_THETA = np.array([1.0, -0.5, 0.8, 0.4])
FAN_REFERENCE_THETA = np.array([-10.6674, 4291.109, 4.3174, -1202.56])

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one line per acceptance criterion for the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def fan():
    return embedded_dataset("fan2009")


@pytest.fixture
def sim_design():
    return embedded_dataset("sim-design")


def random_plan(rng: np.random.Generator, *, stress_dim=None, observed=True) -> TestPlan:
    j = int(rng.integers(1, 3)) if stress_dim is None else stress_dim
    n_cond = int(rng.integers(j + 2, j + 8))
    tau = rng.uniform(0.5, 5.0, n_cond)
    x = rng.uniform(0.0, 1.0, (n_cond, j))
    k = rng.integers(1, 200, n_cond)
    n = rng.integers(0, k + 1) if observed else None
    return TestPlan.from_arrays(tau, x, k, n)


def random_theta(rng: np.random.Generator, stress_dim: int) -> np.ndarray:
    a = rng.uniform(-1.0, 1.5, stress_dim + 1)
    b = rng.uniform(-0.5, 0.8, stress_dim + 1)
    return np.concatenate([a, b])
