"""Quadratic feature expansion residualized against the main effects."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import as_array, standardize
from .exceptions import DimensionMismatch

__all__ = ["is_binary", "quadratic_terms", "QuadraticExpansion"]


def is_binary(col) -> bool:
    return np.unique(col).size <= 2


def _pairs(X):
    p = X.shape[1]
    binary = [is_binary(X[:, j]) for j in range(p)]
    pairs = [(j, k) for j in range(p) for k in range(j + 1, p)]
    pairs += [(j, j) for j in range(p) if not binary[j]]
    return pairs


def quadratic_terms(X, pairs=None):
    """All pairwise products plus squares of the non-binary columns.

    Returns the ``(n, m)`` matrix of products and the list of ``(j, k)``
    column pairs, with ``j == k`` marking a square. Squares of binary columns
    are skipped since they duplicate a main effect up to an affine map.
    """
    X = as_array(X)
    if pairs is None:
        pairs = _pairs(X)
    Q = np.column_stack([X[:, j] * X[:, k] for j, k in pairs]) if pairs else np.empty((X.shape[0], 0))
    return Q, pairs


class QuadraticExpansion(TransformerMixin, BaseEstimator):
    """Quadratic terms with the linear part removed by least squares.

    ``fit`` records which products to form. ``transform`` regresses each
    product on an intercept and the main effects of the matrix it is given,
    keeps the residuals and scales them to norm ``sqrt(n)``.

    Attributes
    ----------
    pairs_ : list of tuple
        Column pairs, ``(j, j)`` for squares.
    n_features_in_ : int
    """

    def fit(self, X, y=None):
        X = as_array(X)
        self.pairs_ = _pairs(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "pairs_")
        X = as_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch("column count differs from fit")
        Q, _ = quadratic_terms(X, self.pairs_)
        base = np.column_stack([np.ones(X.shape[0]), X])
        coef, *_ = np.linalg.lstsq(base, Q, rcond=None)
        return standardize(Q - base @ coef, center=False).values

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "pairs_")
        names = input_features or [f"x{j}" for j in range(self.n_features_in_)]
        return np.array([f"{names[j]}^2" if j == k else f"{names[j]}*{names[k]}" for j, k in self.pairs_])
