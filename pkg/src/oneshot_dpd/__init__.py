"""Robust estimation and testing for one-shot device accelerated life tests
under a log-logistic lifetime model, based on weighted minimum density power
divergence estimators.
"""
from .asymptotics import asymptotic_cov, fisher_info, influence_all, influence_single, j_gamma, k_gamma
from .datasets import embedded_dataset, ingest_csv, write_csv
from .divergence import dpd, estimating_vector, kl_divergence, weighted_objective
from .errors import DataError, DomainError, NumericalError, OneShotError, SingularMatrixError
from .estimation import AffineConstraint, Estimate, FitOptions, fit, fit_mle, fit_restricted
from .hypothesis import TestOutcome, gof_chisq, rao_test, wald_test
from .model import LinkedParams, TestCondition, TestPlan, ThetaVector

__all__ = [
    "AffineConstraint",
    "DataError",
    "DomainError",
    "Estimate",
    "FitOptions",
    "LinkedParams",
    "NumericalError",
    "OneShotError",
    "SingularMatrixError",
    "TestCondition",
    "TestOutcome",
    "TestPlan",
    "ThetaVector",
    "asymptotic_cov",
    "dpd",
    "embedded_dataset",
    "estimating_vector",
    "fisher_info",
    "fit",
    "fit_mle",
    "fit_restricted",
    "gof_chisq",
    "influence_all",
    "influence_single",
    "ingest_csv",
    "j_gamma",
    "k_gamma",
    "kl_divergence",
    "rao_test",
    "wald_test",
    "weighted_objective",
    "write_csv",
]
