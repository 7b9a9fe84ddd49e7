"""Observed and simulated scaled residuals.

All functions return plain arrays: a single residual vector has shape
``(n,)`` and a batch of simulated residuals has shape ``(B, n)``, one unit
norm vector per row. Simulated replicates are indexed ``b = 1..B`` in the
error stream; index 0 is never drawn.
"""

from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed

from . import sqrt_lasso
from .core import ErrorSource, as_array, check_response, draw_errors, is_centered
from .exceptions import DegenerateResidual, RankDeficient

__all__ = [
    "ols_basis",
    "ols_scaled_residuals",
    "simulate_ols_null",
    "lasso_scaled_residuals",
    "simulate_lasso_null",
    "null_errors",
]

_DEGENERATE = 1e-12


def ols_basis(X, intercept=None) -> np.ndarray:
    """Orthonormal basis for the column space of ``X``.

    A constant column is prepended when ``intercept`` is set, which defaults
    to whether ``X`` is a centered :class:`~rptests.core.DesignMatrix`.
    """
    if intercept is None:
        intercept = is_centered(X)
    A = as_array(X)
    n = A.shape[0]
    if intercept:
        A = np.column_stack([np.ones(n), A])
    if A.shape[1] >= n:
        raise RankDeficient(f"least squares residuals need p < n (got {A.shape[1]} >= {n})")
    Q, R = np.linalg.qr(A)
    d = np.abs(np.diag(R))
    if d.min() <= 1e-10 * d.max():
        raise RankDeficient("design is rank deficient")
    return Q


def _project_out(Q, V):
    return V - (V @ Q) @ Q.T


def _unit(v, ref=None):
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    ref = nv if ref is None else ref
    if np.any(nv <= _DEGENERATE * np.maximum(ref, np.finfo(float).tiny)) or np.any(nv == 0):
        raise DegenerateResidual("residual vector is numerically zero")
    return v / nv


def ols_scaled_residuals(X, y, intercept=None) -> np.ndarray:
    """``(I - P) y / ||(I - P) y||`` with ``P`` the projection onto ``col(X)``."""
    Q = ols_basis(X, intercept)
    y = check_response(y, Q.shape[0])
    r = _project_out(Q, y)
    return _unit(r, np.linalg.norm(y))


def null_errors(src: ErrorSource, n: int, B: int) -> np.ndarray:
    """``(B, n)`` matrix of error draws for replicates ``1..B``.

    Resampled errors come from a pool of unit-norm residuals, so they are
    multiplied by ``sqrt(n)`` to match the scale of standard normal noise.
    """
    Z = np.empty((B, n))
    for b in range(B):
        Z[b] = draw_errors(src, n, b + 1)
    if src.kind == "resample":
        Z *= np.sqrt(n)
    return Z


def simulate_ols_null(X, B: int, src: ErrorSource, intercept=None) -> np.ndarray:
    """Scaled residuals ``(I - P) zeta_b / ||(I - P) zeta_b||`` for ``b = 1..B``."""
    Q = ols_basis(X, intercept)
    n = Q.shape[0]
    if B == 0:
        return np.empty((0, n))
    Z = null_errors(src, n, B)
    return _unit(_project_out(Q, Z))


def lasso_scaled_residuals(X, y, lam, intercept=None, tol=sqrt_lasso.COEF_TOL) -> np.ndarray:
    """Unit-norm residual of the square-root Lasso fit of ``y`` on ``X`` at ``lam``.

    With ``intercept`` (default: ``X`` is a centered DesignMatrix) the
    response is centered first, which for centered columns is the same as
    fitting an unpenalized intercept.
    """
    if intercept is None:
        intercept = is_centered(X)
    y = check_response(y)
    if intercept:
        y = y - y.mean()
    res = sqrt_lasso.fit(X, y, lam, tol=tol)
    return _unit(res.residual, np.linalg.norm(y))


def _lasso_batch(X, signal, sigma, lam, errors, intercept):
    out = np.empty_like(errors)
    for i, z in enumerate(errors):
        out[i] = lasso_scaled_residuals(X, signal + sigma * z, lam, intercept)
    return out


def simulate_lasso_null(
    beta_check, sigma_check, X, lam, B: int, src: ErrorSource, n_jobs=1, intercept=None
) -> np.ndarray:
    """Scaled residuals of fits to ``X beta_check + sigma_check * zeta_b``, ``b = 1..B``.

    Parameters
    ----------
    beta_check : ndarray of shape (p,)
        Coefficients the null responses are generated around.
    sigma_check : float
        Noise scale of the null responses; must be positive.
    X : DesignMatrix or ndarray of shape (n, p)
    lam : float
        Square-root Lasso penalty used on every simulated response.
    B : int
    src : ErrorSource
    n_jobs : int, default=1
        Replicates are split into contiguous chunks across workers. Results do
        not depend on ``n_jobs``.
    intercept : bool, optional
        As in :func:`lasso_scaled_residuals`.
    """
    if intercept is None:
        intercept = is_centered(X)
    if not sigma_check > 0:
        raise ValueError("sigma_check must be positive")
    A = np.asfortranarray(as_array(X))
    n = A.shape[0]
    if B == 0:
        return np.empty((0, n))
    signal = A @ np.asarray(beta_check, dtype=float)
    Z = null_errors(src, n, B)
    if n_jobs == 1:
        return _lasso_batch(A, signal, sigma_check, lam, Z, intercept)
    chunks = np.array_split(np.arange(B), min(B, abs(n_jobs) * 4 if n_jobs > 0 else 32))
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_lasso_batch)(A, signal, sigma_check, lam, Z[c], intercept) for c in chunks if c.size
    )
    return np.vstack(parts)
