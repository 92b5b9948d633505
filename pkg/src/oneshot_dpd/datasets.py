"""Embedded reference plans and CSV ingestion.

CSV layout, one row per test condition::

    tau,x1,...,xJ,K,n

The intercept column is added on ingest; ``n`` may be left empty for a
design without observed failures (all rows or none).
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import TestPlan

__all__ = ["DATASETS", "embedded_dataset", "ingest_csv", "parse_csv", "write_csv", "format_csv"]

# electro-explosive devices: inspection time, temperature in Kelvin, devices, failures
_FAN2009 = (
    (10, 308, 10, 3),
    (10, 318, 10, 1),
    (10, 328, 10, 6),
    (20, 308, 10, 3),
    (20, 318, 10, 7),
    (20, 328, 10, 7),
    (30, 308, 10, 7),
    (30, 318, 10, 7),
    (30, 328, 10, 9),
)

# The same experiment with the observed-frequency list that accompanies its
# goodness-of-fit calculation, where group 5 (tau 20, 318 K) has 5 failures.
_FAN2009_GOF = tuple(
    (tau, temp, k, 5 if (tau, temp) == (20, 318) else n) for tau, temp, k, n in _FAN2009
)

_SIM_TIMES = (1.0, 1.5, 2.5)
_SIM_STRESS = (0.0, 0.5, 1.0)


def _fan(rows) -> TestPlan:
    tau, temp, k, n = (np.array(c, dtype=float) for c in zip(*rows))
    return TestPlan.from_arrays(tau, (1.0 / temp)[:, None], k, n)


def _sim_design(devices: int = 100) -> TestPlan:
    tau = np.repeat(_SIM_TIMES, len(_SIM_STRESS))
    x = np.tile(_SIM_STRESS, len(_SIM_TIMES))
    return TestPlan.from_arrays(tau, x[:, None], np.full(tau.size, devices))


DATASETS = {
    "fan2009": lambda: _fan(_FAN2009),
    "fan2009-gof": lambda: _fan(_FAN2009_GOF),
    "sim-design": _sim_design,
}


def embedded_dataset(name: str) -> TestPlan:
    """Return an embedded plan by name (see :data:`DATASETS`)."""
    try:
        return DATASETS[name]()
    except KeyError:
        raise DataError(f"unknown dataset {name!r}; available: {', '.join(DATASETS)}") from None


def _num(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {row}: column {col!r} is not a number: {text!r}") from None
    if not np.isfinite(value):
        raise DataError(f"line {row}: column {col!r} is not finite")
    return value


def parse_csv(text: str, source: str = "<string>") -> TestPlan:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    width = len(header) - 3
    expected = ["tau"] + [f"x{j}" for j in range(1, width + 1)] + ["K", "n"]
    if width < 0 or header != expected:
        raise DataError(f"{source}: header must be tau,x1,...,xJ,K,n; got {','.join(header)}")
    if len(rows) == 1:
        raise DataError(f"{source}: no data rows")
    tau, xs, ks, ns = [], [], [], []
    for line, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(r)}")
        cells = [c.strip() for c in r]
        t = _num(cells[0], line, "tau")
        if t <= 0:
            raise DataError(f"line {line}: tau must be positive, got {cells[0]}")
        k = _num(cells[-2], line, "K")
        if k < 1 or k != int(k):
            raise DataError(f"line {line}: K must be a positive integer, got {cells[-2]}")
        if cells[-1] == "":
            n = None
        else:
            n = _num(cells[-1], line, "n")
            if n < 0 or n != int(n) or n > k:
                raise DataError(f"line {line}: n must be an integer in [0, K={int(k)}], got {cells[-1]}")
        tau.append(t)
        xs.append([_num(c, line, header[j + 1]) for j, c in enumerate(cells[1:-2])])
        ks.append(int(k))
        ns.append(n)
    missing = [n is None for n in ns]
    if any(missing) and not all(missing):
        odd = missing.index(not missing[0]) + 2
        raise DataError(f"line {odd}: failures must be given for every row or for none")
    failures = None if all(missing) else np.array(ns, dtype=float)
    covariates = np.array(xs, dtype=float).reshape(len(tau), width)
    return TestPlan.from_arrays(np.array(tau), covariates, np.array(ks), failures)


def ingest_csv(path: str | os.PathLike) -> TestPlan:
    """Read and validate a plan from a CSV file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {p}: {exc.strerror}") from exc
    return parse_csv(text, str(p))


def format_csv(plan: TestPlan) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tau"] + [f"x{j}" for j in range(1, plan.stress_dim + 1)] + ["K", "n"])
    failures = plan.failures if plan.has_failures else [None] * len(plan)
    for tau, row, k, n in zip(plan.tau, plan.design[:, 1:], plan.devices, failures):
        n_text = "" if n is None else (str(int(n)) if float(n).is_integer() else repr(float(n)))
        writer.writerow([repr(float(tau))] + [repr(float(v)) for v in row] + [str(int(k)), n_text])
    return buf.getvalue()


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=f".{p.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(plan: TestPlan, path: str | os.PathLike) -> None:
    atomic_write_text(path, format_csv(plan))
