"""Preferential Bayesian optimization with crash feedback."""

from ._core import (
    Error,
    Posterior,
    ServiceError,
    SessionManager,
    TestProblem,
    augment,
    expected_max,
    fit,
    make_problem,
    probit_preference_probability,
    run_benchmark,
    verify_replay,
)

__all__ = [
    "Error",
    "Posterior",
    "ServiceError",
    "SessionManager",
    "TestProblem",
    "augment",
    "expected_max",
    "fit",
    "make_problem",
    "probit_preference_probability",
    "run_benchmark",
    "verify_replay",
]
