"""Core numeric types: standardized designs, linear models and error streams.

Random streams are keyed by ``(seed, replicate)`` through
:class:`numpy.random.SeedSequence`, so replicate ``b`` can be regenerated
in isolation and in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DimensionMismatch, InvalidParam, NonFinite, ZeroColumn

__all__ = [
    "DesignMatrix",
    "LinearModelSpec",
    "ErrorSource",
    "Standardizer",
    "standardize",
    "draw_errors",
    "rng_for",
    "derive_seed",
    "as_array",
    "check_response",
]

# Tag separating error streams from other keyed streams (folds, forests).
_ERROR_STREAM = 0


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Column-standardized predictor matrix.

    Every column of ``values`` has Euclidean norm ``sqrt(n)``. ``column_scales``
    holds the factor each (optionally centered) raw column was divided by, so
    ``coef_raw = coef / column_scales * sqrt(n)`` maps coefficients back.
    """

    values: np.ndarray
    column_scales: np.ndarray
    column_means: np.ndarray
    centered: bool

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def columns(self, idx) -> "DesignMatrix":
        idx = np.asarray(idx, dtype=int)
        return DesignMatrix(
            self.values[:, idx],
            self.column_scales[idx],
            self.column_means[idx],
            self.centered,
        )

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)


@dataclass(frozen=True)
class LinearModelSpec:
    """Coefficients and noise level of ``y = X beta + sigma * eps``."""

    beta: np.ndarray
    sigma: float = 1.0
    support: np.ndarray = field(default=None)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if not self.sigma > 0:
            raise InvalidParam("sigma must be positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "support", np.flatnonzero(beta != 0))

    @property
    def s(self) -> int:
        return int(self.support.size)


@dataclass(frozen=True, eq=False)
class ErrorSource:
    """Seeded source of error vectors.

    ``kind="gaussian"`` yields i.i.d. standard normal entries;
    ``kind="resample"`` yields uniform draws with replacement from ``pool``.
    """

    kind: str = "gaussian"
    seed: int = 0
    pool: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "resample"):
            raise InvalidParam(f"unknown error kind {self.kind!r}")
        if self.kind == "resample":
            if self.pool is None or np.asarray(self.pool).size == 0:
                raise InvalidParam("resample source needs a non-empty pool")
            object.__setattr__(self, "pool", np.asarray(self.pool, dtype=float).ravel())

    def with_pool(self, pool) -> "ErrorSource":
        return ErrorSource(self.kind, self.seed, pool)


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the stream identified by ``seed`` and integer ``keys``."""
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


def derive_seed(seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def draw_errors(source: ErrorSource, n: int, b: int) -> np.ndarray:
    """Replicate ``b`` of length ``n``; a pure function of ``(seed, b, n)``."""
    if n < 1:
        raise InvalidParam("n must be at least 1")
    rng = rng_for(source.seed, _ERROR_STREAM, b)
    if source.kind == "gaussian":
        return rng.standard_normal(n)
    idx = rng.integers(0, source.pool.size, size=n)
    return source.pool[idx]


def as_array(X) -> np.ndarray:
    """Return the float matrix behind ``X`` (a DesignMatrix or array-like)."""
    if isinstance(X, DesignMatrix):
        return X.values
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.size == 0:
        raise DimensionMismatch("expected a non-empty 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise NonFinite("design contains NaN or Inf")
    return X


def is_centered(X) -> bool:
    return isinstance(X, DesignMatrix) and X.centered


def check_response(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if n is not None and y.shape[0] != n:
        raise DimensionMismatch(f"response has length {y.shape[0]}, expected {n}")
    if not np.all(np.isfinite(y)):
        raise NonFinite("response contains NaN or Inf")
    return y


def standardize(raw, center: bool = True) -> DesignMatrix:
    """Scale every column to Euclidean norm ``sqrt(n)``, optionally centering first.

    Raises
    ------
    ZeroColumn
        If a column is identically zero (or constant when ``center`` is set).
    DimensionMismatch
        For empty input or fewer than two rows.
    """
    if isinstance(raw, DesignMatrix):
        raw = raw.values
    X = np.array(raw, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.size == 0:
        raise DimensionMismatch("expected a non-empty 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise NonFinite("design contains NaN or Inf")
    n, p = X.shape
    if n < 2:
        raise DimensionMismatch("need at least two rows")
    means = X.mean(axis=0) if center else np.zeros(p)
    if center:
        X -= means
    norms = np.linalg.norm(X, axis=0)
    ref = np.linalg.norm(np.asarray(raw, dtype=float).reshape(n, -1), axis=0)
    for j in range(p):
        # relative test: centering a constant column leaves rounding noise only
        if norms[j] == 0 or norms[j] <= 1e-12 * max(ref[j], 1.0):
            raise ZeroColumn(j)
    scales = norms / np.sqrt(n)
    X /= scales
    return DesignMatrix(np.asfortranarray(X), scales, means, bool(center))


class Standardizer(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`standardize`.

    Parameters
    ----------
    center : bool, default=True
        Subtract column means before scaling.
    """

    def __init__(self, center=True):
        self.center = center

    def fit(self, X, y=None):
        dm = standardize(X, center=self.center)
        self.mean_ = dm.column_means
        self.scale_ = dm.column_scales
        self.n_features_in_ = dm.p
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        X = as_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch("column count differs from fit")
        return (X - self.mean_) / self.scale_
