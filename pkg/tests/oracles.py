"""Independent reference computations used as test oracles.

None of these call into the package's numerical core; they are written from
the model's textbook formulas with plain numpy/scipy.
"""
import numpy as np
from scipy.optimize import minimize
from scipy.special import log_expit

from oneshot_dpd.model import cdf_gradient, cell_probs


def probs(theta, tau, design):
    half = design.shape[1]
    alpha = np.exp(design @ theta[:half])
    beta = np.exp(design @ theta[half:])
    ta, aa = tau**beta, alpha**beta
    return ta / (ta + aa), aa / (ta + aa)


def neg_loglik(theta, tau, design, k, n):
    half = design.shape[1]
    u = np.exp(design @ theta[half:]) * (np.log(tau) - design @ theta[:half])
    return -np.sum(n * log_expit(u) + (k - n) * log_expit(-u))


def loglik_gradient(theta, tau, design, k, n):
    half = design.shape[1]
    log_alpha = design @ theta[:half]
    beta = np.exp(design @ theta[half:])
    u = beta * (np.log(tau) - log_alpha)
    f = 1 / (1 + np.exp(-u))
    d = np.hstack([-beta[:, None] * design, u[:, None] * design])
    return (n - k * f) @ d


def dpd_objective(theta, tau, design, k, n, gamma):
    """Weighted DPD objective written directly from the pairwise divergence."""
    f, r = probs(theta, tau, design)
    w = k / k.sum()
    p1 = n / k
    if gamma == 0:
        return -np.sum(w * (np.where(p1 > 0, p1 * np.log(f), 0) + np.where(p1 < 1, (1 - p1) * np.log(r), 0)))
    return np.sum(
        w * (f ** (gamma + 1) + r ** (gamma + 1) - (gamma + 1) / gamma * (p1 * f**gamma + (1 - p1) * r**gamma))
    )


def score_outer_matrices(theta, plan, gamma):
    """J and K assembled from per-condition cdf gradients (score-variance form)."""
    d = plan.n_params
    jm = np.zeros((d, d))
    km = np.zeros((d, d))
    for c, w in zip(plan.conditions, plan.weights):
        pp = cell_probs(theta, c)
        g = cdf_gradient(theta, c)
        lead = pp.fail ** (gamma - 1) + pp.survive ** (gamma - 1)
        outer = np.outer(g, g)
        jm += w * lead * outer
        km += w * lead**2 * pp.fail * pp.survive * outer
    return jm, km


def classical_wald(theta_hat, plan, matrix_l, target_c):
    """Classical Wald statistic with the Fisher information of the whole experiment."""
    info = np.zeros((plan.n_params, plan.n_params))
    for c in plan.conditions:
        pp = cell_probs(theta_hat, c)
        g = cdf_gradient(theta_hat, c)
        info += c.devices * np.outer(g, g) / (pp.fail * pp.survive)
    m = matrix_l @ theta_hat - target_c
    cov = matrix_l @ np.linalg.inv(info) @ matrix_l.T
    return float(m @ np.linalg.solve(cov, m))


def reduced_refit(plan, gamma, free_index, complete, start, scale=None):
    """Minimise the objective over free coordinates only; ``complete`` maps them to full theta."""
    tau, design = plan.tau, plan.design
    k, n = plan.devices, plan.failures

    def obj(z):
        return dpd_objective(complete(z), tau, design, k, n, gamma)

    best = None
    for s in start:
        res = minimize(obj, s, method="BFGS", options={"gtol": 1e-13, "maxiter": 5000})
        res = minimize(obj, res.x, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20000})
        res = minimize(obj, res.x, method="BFGS", options={"gtol": 1e-14, "maxiter": 5000})
        if best is None or res.fun < best.fun:
            best = res
    return complete(best.x), best.fun
