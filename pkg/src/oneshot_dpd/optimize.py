"""BFGS with a backtracking line search.

Small and dependency-free on purpose: the estimators need a convergence test
on a caller-defined stationarity measure (not the raw gradient norm), a
caller-supplied initial inverse Hessian and an inspectable objective trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["BFGSResult", "bfgs"]

# fun(x) -> (objective, gradient, stationarity measure)
Evaluation = tuple[float, np.ndarray, float]


@dataclass
class BFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    stationarity: float
    converged: bool
    iterations: int
    message: str
    trace: list[float] = field(default_factory=list)


def bfgs(
    fun: Callable[[np.ndarray], Evaluation],
    x0: np.ndarray,
    *,
    tol: float,
    max_iter: int = 500,
    step_tol: float = 1e-10,
    inv_hess0: np.ndarray | None = None,
    c1: float = 1e-4,
    max_backtracks: int = 60,
) -> BFGSResult:
    """Minimise ``fun`` from ``x0`` until its stationarity measure drops to ``tol``.

    The objective never increases between accepted iterates by more than its
    own rounding noise. Trial points whose objective differs from the current
    one by no more than that noise cannot be judged by the Armijo condition;
    they are accepted if they lower the stationarity measure.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    h0 = np.eye(n) if inv_hess0 is None else np.array(inv_hess0, dtype=float)
    h = h0.copy()
    f, g, stat = fun(x)
    trace = [f]
    if not math.isfinite(f):
        return BFGSResult(x, f, g, stat, False, 0, "non-finite objective at start", trace)

    for it in range(1, max_iter + 1):
        if stat <= tol:
            return BFGSResult(x, f, g, stat, True, it - 1, "stationarity below tolerance", trace)
        d = -h @ g
        slope = g @ d
        if not slope < 0:
            h = h0.copy()
            d = -h @ g
            slope = g @ d
            if not slope < 0:
                return BFGSResult(x, f, g, stat, False, it - 1, "no descent direction", trace)

        # objective differences below this are rounding, not signal
        noise = 8 * np.finfo(float).eps * max(1.0, abs(f))
        step = 1.0
        accepted = None
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new, stat_new = fun(x_new)
            if math.isfinite(f_new) and np.all(np.isfinite(g_new)):
                if abs(f_new - f) <= noise:
                    # Armijo is uninformative here; judge by stationarity
                    if stat_new < stat:
                        accepted = (x_new, f_new, g_new, stat_new)
                        break
                elif f_new <= f + c1 * step * slope:
                    accepted = (x_new, f_new, g_new, stat_new)
                    break
            step *= 0.5
        if accepted is None:
            return BFGSResult(x, f, g, stat, stat <= tol, it - 1, "line search failed", trace)

        x_new, f_new, g_new, stat_new = accepted
        s = x_new - x
        y = g_new - g
        stalled = stat_new > 0.5 * stat
        x, f, g, stat = x_new, f_new, g_new, stat_new
        trace.append(f)

        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            hy = h @ y
            h = h + (rho * rho * (y @ hy) + rho) * np.outer(s, s) - rho * (
                np.outer(hy, s) + np.outer(s, hy)
            )
        # tiny steps that still shrink the stationarity measure are progress
        if stalled and np.max(np.abs(s)) <= step_tol * max(1.0, np.max(np.abs(x))):
            done = stat <= tol
            return BFGSResult(x, f, g, stat, done, it, "step below tolerance", trace)

    return BFGSResult(x, f, g, stat, stat <= tol, max_iter, "iteration limit reached", trace)
