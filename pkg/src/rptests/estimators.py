"""Estimator-style wrappers around the residual prediction tests.

``fit(X, y)`` runs the test and stores ``pvalue_`` (or ``pvalues_`` for the
per-predictor test) and the full result in ``result_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .core import ErrorSource
from .procedures import as_design, group_test, hetero_test, nonlinearity_test, quadratic_test
from .single_var import all_single_var_pvalues
from .tree_ensemble import ForestConfig

__all__ = [
    "GroupTest",
    "NonlinearityTest",
    "HeteroscedasticityTest",
    "QuadraticEffectsTest",
    "SingleVariableTest",
]


class _RPTest(BaseEstimator):
    def _store(self, res, X):
        self.result_ = res
        self.pvalue_ = res.pvalue
        self.n_features_in_ = np.shape(X)[1]
        return self


class GroupTest(_RPTest):
    """Test whether the columns in ``group`` add to a sparse linear model.

    Parameters
    ----------
    group : array-like of int
    B : int, default=249
    random_state : int, default=0
    error_model : {"gaussian", "resample"}, default="gaussian"
    n_jobs : int, default=1
    """

    def __init__(self, group=None, B=249, random_state=0, error_model="gaussian", n_jobs=1):
        self.group = group
        self.B = B
        self.random_state = random_state
        self.error_model = error_model
        self.n_jobs = n_jobs

    def fit(self, X, y):
        res = group_test(
            X, y, self.group, B=self.B, seed=self.random_state, error_model=self.error_model,
            n_jobs=self.n_jobs,
        )
        return self._store(res, X)


class NonlinearityTest(_RPTest):
    """Random forest test for a nonlinear signal in the Lasso residuals."""

    def __init__(self, B=249, random_state=0, error_model="gaussian", n_trees=500,
                 equicorrelation=True, n_jobs=1):
        self.B = B
        self.random_state = random_state
        self.error_model = error_model
        self.n_trees = n_trees
        self.equicorrelation = equicorrelation
        self.n_jobs = n_jobs

    def fit(self, X, y):
        res = nonlinearity_test(
            X, y, B=self.B, seed=self.random_state, error_model=self.error_model,
            forest=ForestConfig(n_trees=self.n_trees), equicorrelation=self.equicorrelation,
            n_jobs=self.n_jobs,
        )
        return self._store(res, X)


class HeteroscedasticityTest(_RPTest):
    """Lasso curve test for a variance that depends on the predictors."""

    def __init__(self, B=249, random_state=0, error_model="gaussian", n_jobs=1):
        self.B = B
        self.random_state = random_state
        self.error_model = error_model
        self.n_jobs = n_jobs

    def fit(self, X, y):
        res = hetero_test(
            X, y, B=self.B, seed=self.random_state, error_model=self.error_model, n_jobs=self.n_jobs
        )
        return self._store(res, X)


class QuadraticEffectsTest(_RPTest):
    """Least squares model checked against all interactions and squares."""

    def __init__(self, B=249, random_state=0, error_model="gaussian"):
        self.B = B
        self.random_state = random_state
        self.error_model = error_model

    def fit(self, X, y):
        res = quadratic_test(X, y, B=self.B, seed=self.random_state, error_model=self.error_model)
        return self._store(res, X)


class SingleVariableTest(BaseEstimator):
    """Bootstrap-normalized p-value for every predictor.

    Attributes
    ----------
    pvalues_ : ndarray of shape (n_features,)
        NaN where the test could not be formed.
    results_ : list of SingleVarResult
    """

    def __init__(self, B=100, random_state=0, n_jobs=1):
        self.B = B
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        D = as_design(X)
        self.results_ = all_single_var_pvalues(
            D, y, B=self.B, src=ErrorSource("gaussian", self.random_state), n_jobs=self.n_jobs
        )
        self.pvalues_ = np.array([r.p_value for r in self.results_])
        self.n_features_in_ = D.p
        return self
