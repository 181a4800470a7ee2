"""Estimator-style wrappers around the solvers.

``fit`` takes a scenario (a :class:`Scenario`, a mapping or a path to a
scenario document) instead of a data matrix, and stores its results in
trailing-underscore attributes. Hyperparameters live in ``__init__`` so that
``get_params``, ``set_params`` and ``sklearn.base.clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .model import check_scenario, evaluate
from .pf import pf_iterate
from .solver import SolveOptions, solve

__all__ = ["WeightedAllocator", "PfAllocator"]


class _AllocatorMixin:
    def rates(self) -> np.ndarray:
        """Per-receiver rates of the fitted allocation."""
        check_is_fitted(self, "allocation_")
        return self.report_.per_receiver

    def score(self, scenario=None) -> float:
        """Weighted throughput of the fitted allocation (on ``scenario`` if given)."""
        check_is_fitted(self, "allocation_")
        if scenario is None:
            return float(self.report_.weighted_total)
        return float(evaluate(check_scenario(scenario), self.allocation_).weighted_total)


class WeightedAllocator(_AllocatorMixin, BaseEstimator):
    """Optimal weighted-throughput allocation.

    Parameters mirror :class:`SolveOptions`; ``weights`` overrides the
    scenario's own weights when given.
    """

    def __init__(self, mode="orthogonal", weights=None, epsilon_schedule=None, max_outer_iters=200,
                 objective_tol=1e-8, extrapolate=True):
        self.mode = mode
        self.weights = weights
        self.epsilon_schedule = epsilon_schedule
        self.max_outer_iters = max_outer_iters
        self.objective_tol = objective_tol
        self.extrapolate = extrapolate

    def fit(self, scenario, y=None):
        sc = check_scenario(scenario)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (sc.n_receivers,):
                raise ValueError(f"weights need {sc.n_receivers} entries, got shape {w.shape}")
            sc = check_scenario(sc.with_weights(w))
        opts = SolveOptions(self.mode, self.epsilon_schedule, self.max_outer_iters, self.objective_tol,
                            self.extrapolate)
        self.allocation_, self.report_, self.trace_ = solve(sc, opts)
        self.n_receivers_ = sc.n_receivers
        return self


class PfAllocator(_AllocatorMixin, BaseEstimator):
    """Proportionally fair allocation (orthogonal broadcast)."""

    def __init__(self, rule="master", initial_weights=None, tol=None, max_iters=200):
        self.rule = rule
        self.initial_weights = initial_weights
        self.tol = tol
        self.max_iters = max_iters

    def fit(self, scenario, y=None):
        sc = check_scenario(scenario)
        self.allocation_, self.pf_report_, self.state_ = pf_iterate(
            sc, initial_weights=self.initial_weights, tol=self.tol, max_iters=self.max_iters, rule=self.rule)
        self.report_ = evaluate(sc.with_weights(self.state_.weights), self.allocation_)
        self.weights_ = self.state_.weights
        self.n_receivers_ = sc.n_receivers
        return self

    def score(self, scenario=None) -> float:
        """PF utility ``sum log R`` of the fitted allocation."""
        check_is_fitted(self, "allocation_")
        if scenario is None:
            return float(self.pf_report_.pf_utility)
        return float(evaluate(check_scenario(scenario), self.allocation_).pf_utility)
