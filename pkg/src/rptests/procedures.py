"""Ready-made residual prediction tests.

Each function takes a design and a response and returns an
:class:`~rptests.calibration.RPTestResult`. Designs given as plain arrays
are standardized (centered, columns scaled to norm ``sqrt(n)``) first.
"""

from __future__ import annotations

import numpy as np

from .calibration import rp_test
from .core import DesignMatrix, rng_for, standardize
from .exceptions import InvalidParam
from .features import QuadraticExpansion
from .rp_methods import ForestOob, HeteroCurve, LassoCurve, OlsRss, residualize_group
from .tree_ensemble import ForestConfig

__all__ = [
    "CURVE_MIN_RATIO",
    "as_design",
    "random_group_split",
    "residualized_group",
    "group_test",
    "nonlinearity_test",
    "hetero_test",
    "quadratic_test",
    "ols_group_test",
]

# Curves run from the largest lambda_max down to this fraction of it.
CURVE_MIN_RATIO = 1e-3


def as_design(X) -> DesignMatrix:
    return X if isinstance(X, DesignMatrix) else standardize(X)


def random_group_split(p, keep, seed):
    """Random half split of ``range(p)`` whose complement contains ``keep``.

    Returns ``(G, G_complement)`` as sorted index arrays with
    ``|G_complement| = p // 2``.
    """
    keep = np.unique(np.asarray(keep, dtype=int))
    half = p // 2
    if keep.size > half:
        raise InvalidParam("support does not fit into half of the columns")
    rest = np.setdiff1d(np.arange(p), keep)
    extra = rng_for(seed).choice(rest, half - keep.size, replace=False)
    comp = np.sort(np.concatenate([keep, extra]))
    return np.setdiff1d(np.arange(p), comp), comp


def residualized_group(X, group, gamma=None):
    """Group columns residualized on the others and rescaled to norm ``sqrt(n)``."""
    D = as_design(X)
    group = np.asarray(group, dtype=int)
    comp = np.setdiff1d(np.arange(D.p), group)
    W = residualize_group(D.values[:, group], D.values[:, comp], gamma)
    return W * (np.sqrt(D.n) / np.linalg.norm(W, axis=0))


def group_test(
    X, y, group, B=249, seed=0, error_model="gaussian", n_lambdas=100, gamma=None,
    residualized=None, cv=None, n_jobs=1, lam=None,
):
    """Test ``beta_G = 0`` with Lasso curves on the residualized group columns.

    Parameters
    ----------
    X : DesignMatrix or array of shape (n, p)
    y : array of shape (n,)
    group : array of int
        Columns under test.
    B : int, default=249
    seed : int, default=0
    error_model : {"gaussian", "resample"}
    n_lambdas : int, default=100
    gamma : float, optional
        Penalty for residualizing the group columns.
    residualized : ndarray, optional
        Precomputed :func:`residualized_group` output, reused across
        responses on the same design.
    cv : CvConfig, optional
    n_jobs : int, default=1
    lam : float, optional
        First-stage penalty; see :func:`~rptests.calibration.rp_test`.
    """
    D = as_design(X)
    group = np.unique(np.asarray(group, dtype=int))
    if group.size == 0 or group.size >= D.p or group.min() < 0 or group.max() >= D.p:
        raise InvalidParam("group must be a non-empty proper subset of the columns")
    comp = np.setdiff1d(np.arange(D.p), group)
    Z = residualized_group(D, group, gamma) if residualized is None else residualized
    curve = LassoCurve(Z, n_lambdas, CURVE_MIN_RATIO)
    return rp_test(
        D.columns(comp), y, curve, B=B, seed=seed, error_model=error_model, cv=cv, n_jobs=n_jobs,
        lam=lam,
    )


def nonlinearity_test(
    X, y, B=249, seed=0, error_model="gaussian", forest=None, equicorrelation=True, cv=None,
    n_jobs=1, lam=None,
):
    """Forest out-of-bag error on the Lasso residuals' equicorrelation set."""
    D = as_design(X)
    rp = ForestOob(D.values, forest or ForestConfig(), seed, equicorrelation)
    return rp_test(
        D, y, rp, B=B, seed=seed, error_model=error_model, cv=cv, n_jobs=n_jobs, lam=lam
    )


def hetero_test(
    X, y, B=249, seed=0, error_model="gaussian", n_lambdas=100, cv=None, n_jobs=1, lam=None
):
    """Lasso curves of centered absolute residuals on the equicorrelation set."""
    D = as_design(X)
    rp = HeteroCurve(D.values, n_lambdas, CURVE_MIN_RATIO)
    return rp_test(
        D, y, rp, B=B, seed=seed, error_model=error_model, cv=cv, n_jobs=n_jobs, lam=lam
    )


def quadratic_test(X_raw, y, B=249, seed=0, error_model="gaussian", n_lambdas=100):
    """Test for interactions and squares with least squares residuals.

    The residuals of ``y`` on an intercept and the raw main effects are
    regressed on the residualized quadratic terms along a Lasso path.
    """
    X_raw = np.asarray(X_raw, dtype=float)
    Q = QuadraticExpansion().fit_transform(X_raw)
    D = standardize(X_raw)
    curve = LassoCurve(Q, n_lambdas, CURVE_MIN_RATIO)
    return rp_test(D, y, curve, B=B, seed=seed, error_model=error_model, first_stage="ols")


def ols_group_test(X, y, extra, B=9999, seed=0, error_model="gaussian"):
    """Least squares residuals of ``y`` on ``X`` predicted by ``[X, extra]``.

    With Gaussian errors this is a Monte Carlo version of the partial F-test.
    """
    X = np.asarray(X, dtype=float)
    X_all = np.column_stack([X, np.asarray(extra, dtype=float)])
    return rp_test(
        X, y, OlsRss(X_all, intercept=False), B=B, seed=seed, error_model=error_model,
        first_stage="ols", intercept=False,
    )
