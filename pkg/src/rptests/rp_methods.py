"""Residual prediction functions.

A residual prediction function maps unit-norm residuals (and fixed
predictors) to one or more numbers measuring how well the residuals can be
predicted. The callable classes here evaluate a whole stack of residual
rows at once, returning an ``(m, L)`` array, so observed and simulated
residuals share one grid of penalties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sqrt_lasso
from .core import as_array, derive_seed
from .exceptions import DegenerateResidual, InvalidParam
from .residuals import ols_basis
from .tree_ensemble import ForestConfig, fit_forest

__all__ = [
    "ols_rss_rp",
    "lasso_rss_curve",
    "residualize_group",
    "equicorrelation_set",
    "hetero_target",
    "hetero_rp",
    "forest_rp",
    "OlsRss",
    "LassoCurve",
    "HeteroCurve",
    "ForestOob",
]

EQUICORRELATION_TOL = 1e-8


def ols_rss_rp(R, X_all, intercept=None):
    """``||(I - P_all) R||^2`` for a residual vector or a stack of rows."""
    Q = ols_basis(X_all, intercept)
    R = np.asarray(R, dtype=float)
    E = R - (R @ Q) @ Q.T
    return (E * E).sum(axis=-1)


def _curve_rows(Z, R, grid):
    grid = np.asarray(grid, dtype=float)
    out = np.empty((R.shape[0], grid.size))
    for i, r in enumerate(R):
        if not np.any(r):
            raise DegenerateResidual("residual vector is zero")
        # the path stops refitting once it interpolates; later entries
        # repeat the last fitted RSS
        betas, _, _ = sqrt_lasso.fit_path(Z, r, grid)
        E = r[:, None] - Z @ betas.T
        out[i] = (E * E).sum(axis=0)
    return out


def lasso_rss_curve(R, Z, grid):
    """RSS of square-root Lasso fits of ``R`` on ``Z`` along a descending grid.

    Parameters
    ----------
    R : ndarray of shape (n,) or (m, n)
        Unit-norm residuals.
    Z : DesignMatrix or ndarray of shape (n, q)
    grid : ndarray of shape (L,)
        Descending penalties; fits are warm-started down the grid.

    Returns
    -------
    ndarray of shape (L,) or (m, L)
    """
    Z = np.asfortranarray(as_array(Z))
    R = np.asarray(R, dtype=float)
    out = _curve_rows(Z, np.atleast_2d(R), grid)
    return out[0] if R.ndim == 1 else out


def residualize_group(X_G, X_rest, gamma=None):
    """Residualize each column of ``X_G`` on ``X_rest`` with the square-root Lasso.

    ``gamma`` defaults to :func:`~rptests.sqrt_lasso.default_lambda` for the
    dimensions of ``X_rest``.

    Raises
    ------
    DegenerateResidual
        If a residualized column has norm below ``1e-8 * sqrt(n)``.
    """
    G = as_array(X_G)
    A = np.asfortranarray(as_array(X_rest))
    n = A.shape[0]
    if G.shape[0] != n:
        raise InvalidParam("X_G and X_rest differ in row count")
    if gamma is None:
        gamma = sqrt_lasso.default_lambda(n, A.shape[1])
    if not gamma > 0:
        raise InvalidParam("gamma must be positive")
    W = np.empty_like(G)
    for g in range(G.shape[1]):
        if not np.any(G[:, g]):
            raise DegenerateResidual(f"column {g} is zero")
        W[:, g] = sqrt_lasso.fit(A, G[:, g], gamma).residual
        if np.linalg.norm(W[:, g]) < 1e-8 * np.sqrt(n):
            raise DegenerateResidual(f"column {g} is reproduced by the other predictors")
    return W


def equicorrelation_set(X, R, tol=EQUICORRELATION_TOL) -> np.ndarray:
    """Indices whose absolute inner product with ``R`` is within ``tol`` of the maximum."""
    c = np.abs(as_array(X).T @ np.asarray(R, dtype=float))
    return np.flatnonzero(c >= (1 - tol) * c.max())


def hetero_target(R):
    """Centered ``|R|`` rescaled to unit norm, or ``None`` when ``|R|`` is constant."""
    a = np.abs(np.asarray(R, dtype=float))
    a = a - a.mean()
    na = np.linalg.norm(a)
    if na <= 1e-12 * max(np.abs(R).max(), 1e-300):
        return None
    return a / na


def hetero_rp(R, X_eq, grid):
    """Lasso RSS curve of the centered absolute residuals on ``X_eq``.

    Constant ``|R|`` has no variation to explain and gives a zero curve.
    """
    a = hetero_target(R)
    if a is None:
        return np.zeros(len(grid))
    return lasso_rss_curve(a, X_eq, grid)


def forest_rp(R, X_eq, cfg: ForestConfig | None = None, seed=None) -> float:
    """Out-of-bag mean squared error of a random forest regressing ``R`` on ``X_eq``."""
    cfg = cfg or ForestConfig()
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    X_eq = as_array(X_eq)
    if X_eq.shape[0] < 10:
        raise InvalidParam("forest residual prediction needs n >= 10")
    return fit_forest(X_eq, R, cfg).oob_mse


def _common_grid(lmax, n_lambdas, min_ratio):
    if lmax <= 0:
        return np.full(n_lambdas, 1.0)
    return lmax * np.geomspace(1.0, min_ratio, n_lambdas)


@dataclass
class OlsRss:
    """``||(I - P_all) R||^2``, a single number per row."""

    X_all: object
    intercept: bool | None = None

    def __call__(self, R):
        return ols_rss_rp(np.atleast_2d(R), self.X_all, self.intercept)[:, None]


@dataclass
class LassoCurve:
    """Lasso RSS curve of each row on ``Z`` over one shared grid.

    Unless ``grid`` is given, it runs from the largest ``lambda_max`` across
    the evaluated rows down to ``min_ratio`` times that value.
    """

    Z: object
    n_lambdas: int = 100
    min_ratio: float = 1e-3
    grid: np.ndarray | None = None

    def grid_for(self, R):
        if self.grid is not None:
            return np.asarray(self.grid, dtype=float)
        Z = as_array(self.Z)
        c = np.abs(R @ Z).max(axis=1) / (np.sqrt(Z.shape[0]) * np.linalg.norm(R, axis=1))
        return _common_grid(c.max(), self.n_lambdas, self.min_ratio)

    def __call__(self, R):
        R = np.atleast_2d(R)
        return lasso_rss_curve(R, self.Z, self.grid_for(R))


@dataclass
class HeteroCurve:
    """Lasso curve of centered ``|R|`` on each row's own equicorrelation set."""

    X: object
    n_lambdas: int = 100
    min_ratio: float = 1e-3
    tol: float = EQUICORRELATION_TOL

    def __call__(self, R):
        R = np.atleast_2d(R)
        X = np.asfortranarray(as_array(self.X))
        n = X.shape[0]
        targets, sets, lmax = [], [], 0.0
        for r in R:
            eq = equicorrelation_set(X, r, self.tol)
            a = hetero_target(r)
            targets.append(a)
            sets.append(eq)
            if a is not None:
                lmax = max(lmax, np.abs(a @ X[:, eq]).max() / np.sqrt(n))
        grid = _common_grid(lmax, self.n_lambdas, self.min_ratio)
        out = np.zeros((R.shape[0], grid.size))
        for i, (a, eq) in enumerate(zip(targets, sets)):
            if a is not None:
                out[i] = lasso_rss_curve(a, np.asfortranarray(X[:, eq]), grid)
        return out


@dataclass
class ForestOob:
    """Forest out-of-bag error for each row.

    Row ``i`` uses forest seed ``derive_seed(seed, i)``, so the observed
    residual (row 0) and every simulated row get their own fixed stream.
    With ``equicorrelation`` set, each row is regressed only on its own
    equicorrelation set.
    """

    X: object
    config: ForestConfig | None = None
    seed: int = 0
    equicorrelation: bool = True
    tol: float = EQUICORRELATION_TOL

    def __call__(self, R):
        R = np.atleast_2d(R)
        X = as_array(self.X)
        cfg = self.config or ForestConfig()
        out = np.empty((R.shape[0], 1))
        for i, r in enumerate(R):
            cols = equicorrelation_set(X, r, self.tol) if self.equicorrelation else slice(None)
            out[i, 0] = forest_rp(r, X[:, cols], cfg, derive_seed(self.seed, i))
        return out
