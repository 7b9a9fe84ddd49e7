"""Bagged CART regression forest with out-of-bag error.

Trees split on variance reduction over midpoints between sorted distinct
values, trying ``mtry`` features drawn without replacement at each node.
Gain ties go to the lowest feature index, then the lowest threshold. Tree
``t`` is grown from its own seed, so a fitted model depends only on the data
and the configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .core import as_array, check_response, derive_seed
from .exceptions import DegenerateInput, DimensionMismatch, InvalidParam, NoOobSamples

__all__ = ["ForestConfig", "ForestModel", "fit_forest", "predict", "oob_error", "OobForestRegressor"]


@dataclass(frozen=True)
class ForestConfig:
    """Forest settings.

    ``mtry=None`` means ``max(1, p // 3)`` for the training matrix. With
    ``bootstrap=False`` every tree sees all rows and no row is out of bag.
    """

    n_trees: int = 500
    mtry: int | None = None
    min_node_size: int = 5
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidParam("n_trees must be at least 1")
        if self.min_node_size < 1:
            raise InvalidParam("min_node_size must be at least 1")
        if self.mtry is not None and self.mtry < 1:
            raise InvalidParam("mtry must be at least 1")

    def replace(self, **kw) -> "ForestConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class ForestModel:
    """Fitted forest stored as flat node arrays, one row per tree.

    ``feature[t, k] == -1`` marks a leaf whose prediction is ``value[t, k]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    oob_prediction: np.ndarray
    oob_count: np.ndarray
    y: np.ndarray

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]

    @property
    def oob_mse(self) -> float:
        return oob_error(self)


@njit(cache=True)
def _best_split(X, y, idx, start, stop, features, min_leaf):
    # returns (gain, feature, threshold, n_left); gain <= 0 means no split
    m = stop - start
    total = 0.0
    for i in range(start, stop):
        total += y[idx[i]]
    base = total * total / m
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    best_nl = 0
    xs = np.empty(m)
    ys = np.empty(m)
    for f in features:
        for i in range(m):
            xs[i] = X[idx[start + i], f]
        order = np.argsort(xs, kind="mergesort")
        for i in range(m):
            ys[i] = y[idx[start + order[i]]]
        left = 0.0
        for k in range(1, m):
            left += ys[k - 1]
            a = xs[order[k - 1]]
            b = xs[order[k]]
            if k < min_leaf or m - k < min_leaf or a == b:
                continue
            right = total - left
            gain = left * left / k + right * right / (m - k) - base
            if gain > best_gain * (1 + 1e-12) + 1e-300:
                best_gain = gain
                best_f = f
                best_thr = 0.5 * (a + b)
                best_nl = k
    # scale-aware floor: splits that only move rounding noise are ignored
    sq = 0.0
    for i in range(start, stop):
        sq += y[idx[i]] * y[idx[i]]
    if best_gain <= 1e-12 * max(sq - base, 1e-300) or sq - base <= 1e-14 * sq:
        return 0.0, -1, 0.0, 0
    return best_gain, best_f, best_thr, best_nl


@njit(cache=True)
def _grow(X, y, sample, mtry, min_leaf, feature, threshold, left, right, value):
    n = sample.size
    p = X.shape[1]
    idx = sample.copy()
    # explicit stack of (node, start, stop)
    stack = np.empty((2 * n + 1, 3), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    top = 1
    n_nodes = 1
    perm = np.arange(p)
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        stop = stack[top, 2]
        s = 0.0
        for i in range(start, stop):
            s += y[idx[i]]
        value[node] = s / (stop - start)
        feature[node] = -1
        if stop - start < 2 * min_leaf:
            continue
        # partial Fisher-Yates: first mtry entries are a uniform draw
        for i in range(mtry):
            j = i + np.random.randint(p - i)
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
        feats = np.sort(perm[:mtry].copy())
        gain, f, thr, nl = _best_split(X, y, idx, start, stop, feats, min_leaf)
        if f < 0:
            continue
        # partition idx[start:stop] so rows with x <= thr come first
        lo = start
        hi = stop - 1
        while lo <= hi:
            if X[idx[lo], f] <= thr:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = lo
        stack[top, 2] = stop
        stack[top + 1, 0] = n_nodes
        stack[top + 1, 1] = start
        stack[top + 1, 2] = lo
        top += 2
        n_nodes += 2
    return n_nodes


@njit(cache=True)
def _predict_tree(feature, threshold, left, right, value, x):
    k = 0
    while feature[k] >= 0:
        if x[feature[k]] <= threshold[k]:
            k = left[k]
        else:
            k = right[k]
    return value[k]


@njit(cache=True)
def _fit(X, y, seeds, mtry, min_leaf, bootstrap):
    n = X.shape[0]
    T = seeds.size
    cap = 2 * n + 1
    feature = np.full((T, cap), -1, dtype=np.int64)
    threshold = np.zeros((T, cap))
    left = np.zeros((T, cap), dtype=np.int64)
    right = np.zeros((T, cap), dtype=np.int64)
    value = np.zeros((T, cap))
    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n, dtype=np.int64)
    inbag = np.zeros(n, dtype=np.bool_)
    for t in range(T):
        np.random.seed(seeds[t])
        if bootstrap:
            sample = np.random.randint(0, n, n)
        else:
            sample = np.arange(n)
        inbag[:] = False
        for i in range(n):
            inbag[sample[i]] = True
        _grow(X, y, sample, mtry, min_leaf, feature[t], threshold[t], left[t], right[t], value[t])
        for i in range(n):
            if not inbag[i]:
                oob_sum[i] += _predict_tree(feature[t], threshold[t], left[t], right[t], value[t], X[i])
                oob_cnt[i] += 1
    return feature, threshold, left, right, value, oob_sum, oob_cnt


@njit(cache=True)
def _predict(feature, threshold, left, right, value, Xn):
    out = np.zeros(Xn.shape[0])
    T = feature.shape[0]
    for i in range(Xn.shape[0]):
        s = 0.0
        for t in range(T):
            s += _predict_tree(feature[t], threshold[t], left[t], right[t], value[t], Xn[i])
        out[i] = s / T
    return out


def fit_forest(X, y, cfg: ForestConfig | None = None) -> ForestModel:
    """Grow ``cfg.n_trees`` trees on bootstrap samples of ``(X, y)``."""
    cfg = cfg or ForestConfig()
    X = np.ascontiguousarray(as_array(X))
    n, p = X.shape
    y = check_response(y, n)
    if n < 2:
        raise DegenerateInput("need at least two observations")
    if n < 2 * cfg.min_node_size:
        raise InvalidParam("need n >= 2 * min_node_size")
    mtry = max(1, p // 3) if cfg.mtry is None else cfg.mtry
    if mtry > p:
        raise InvalidParam(f"mtry={mtry} exceeds the {p} available features")
    seeds = np.array([derive_seed(cfg.seed, t) for t in range(cfg.n_trees)], dtype=np.int64)
    feature, threshold, left, right, value, oob_sum, oob_cnt = _fit(
        X, y, seeds, mtry, cfg.min_node_size, cfg.bootstrap
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        oob_pred = np.where(oob_cnt > 0, oob_sum / np.maximum(oob_cnt, 1), np.nan)
    return ForestModel(feature, threshold, left, right, value, p, oob_pred, oob_cnt, y)


def predict(model: ForestModel, X_new) -> np.ndarray:
    """Average of the per-tree leaf values."""
    X_new = np.ascontiguousarray(as_array(X_new))
    if X_new.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"X_new has {X_new.shape[1]} columns, model was fit on {model.n_features}"
        )
    return _predict(model.feature, model.threshold, model.left, model.right, model.value, X_new)


def oob_error(model: ForestModel) -> float:
    """Mean squared out-of-bag error over rows left out of at least one tree."""
    ok = model.oob_count > 0
    if not ok.any():
        raise NoOobSamples("no observation is out of bag for any tree")
    return float(np.mean((model.y[ok] - model.oob_prediction[ok]) ** 2))


class OobForestRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_forest`.

    Attributes
    ----------
    model_ : ForestModel
    oob_score_ : float
        Out-of-bag mean squared error.
    """

    def __init__(self, n_trees=500, mtry=None, min_node_size=5, random_state=0):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_size = min_node_size
        self.random_state = random_state

    def fit(self, X, y):
        cfg = ForestConfig(self.n_trees, self.mtry, self.min_node_size, int(self.random_state or 0))
        self.model_ = fit_forest(X, y, cfg)
        self.n_features_in_ = self.model_.n_features
        self.oob_score_ = oob_error(self.model_)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, X)
