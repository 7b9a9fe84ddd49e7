"""Bootstrap-normalized significance tests for individual predictors.

For predictor ``k`` the statistic is a regularized partial correlation
between the square-root Lasso residual of ``y`` on the other predictors and
the nodewise residual ``W_k`` of ``X_k`` on the other predictors. Its
bootstrap mean and standard deviation turn it into a two-sided p-value.

When ``k`` is outside the support of the full-design fit, that fit is also
the fit on the other predictors, so no refit is needed. The same holds
within each bootstrap replicate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from . import sqrt_lasso
from .core import ErrorSource, as_array, check_response, is_centered
from .exceptions import DegenerateResidual, InvalidParam, RPTestError
from .residuals import null_errors

__all__ = [
    "NodewiseResidual",
    "SingleVarResult",
    "nodewise_residual",
    "t_statistic",
    "bootstrap_tstats",
    "all_single_var_pvalues",
]

V_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class NodewiseResidual:
    k: int
    w: np.ndarray
    gamma: float


@dataclass(frozen=True, eq=False)
class SingleVarResult:
    """Test outcome for one predictor.

    ``status`` is ``"ok"``, ``"degenerate"`` (bootstrap spread below
    ``1e-6``, p-value set to 1) or the name of the error that prevented the
    test, in which case the numeric fields are NaN.
    """

    k: int
    t_obs: float
    t_boot: np.ndarray
    m_hat: float
    v_hat: float
    p_value: float
    status: str = "ok"


def _others(p, k):
    return np.delete(np.arange(p), k)


def nodewise_residual(X, k, gamma=None) -> NodewiseResidual:
    """Residual of ``X_k`` after a square-root Lasso fit on the other columns."""
    A = as_array(X)
    n, p = A.shape
    if p < 2:
        raise InvalidParam("need at least two predictors")
    if gamma is None:
        gamma = sqrt_lasso.default_lambda(n, p - 1)
    rest = np.asfortranarray(A[:, _others(p, k)])
    w = sqrt_lasso.fit(rest, A[:, k], gamma).residual
    if np.linalg.norm(w) < 1e-8 * np.sqrt(n):
        raise DegenerateResidual(f"predictor {k} is reproduced by the others")
    return NodewiseResidual(int(k), w, float(gamma))


def _t_from_residual(w, r):
    nr = np.linalg.norm(r)
    if nr == 0:
        raise DegenerateResidual("outcome residual is zero")
    return float(w @ r / (np.linalg.norm(w) * nr / np.sqrt(r.size)))


def t_statistic(X, y, k, lam, w: NodewiseResidual) -> float:
    """``w'r / (||w|| ||r|| / sqrt(n))`` with ``r`` the residual of ``y`` on the other predictors."""
    A = as_array(X)
    y = check_response(y, A.shape[0])
    rest = np.asfortranarray(A[:, _others(A.shape[1], k)])
    return _t_from_residual(w.w, sqrt_lasso.fit(rest, y, lam).residual)


def bootstrap_tstats(X, k, theta_hat, sigma_check, lam, w: NodewiseResidual, B, src: ErrorSource):
    """``T*_k`` for ``y* = X_{-k} theta_hat + sigma_check * eps*_b``, ``b = 1..B``.

    ``theta_hat`` has length ``p - 1`` and indexes the columns other than ``k``.
    """
    if not sigma_check > 0:
        raise InvalidParam("sigma_check must be positive")
    A = as_array(X)
    n, p = A.shape
    rest = np.asfortranarray(A[:, _others(p, k)])
    signal = rest @ np.asarray(theta_hat, dtype=float)
    E = null_errors(src, n, B)
    return np.array(
        [_t_from_residual(w.w, sqrt_lasso.fit(rest, signal + sigma_check * e, lam).residual) for e in E]
    )


def _pvalue(k, t_obs, t_boot):
    m = float(t_boot.mean())
    v = float(t_boot.std(ddof=1)) if t_boot.size > 1 else 0.0
    if not v >= V_FLOOR:
        return SingleVarResult(k, t_obs, t_boot, m, v, 1.0, "degenerate")
    return SingleVarResult(k, t_obs, t_boot, m, v, float(2 * norm.sf(abs(t_obs - m) / v)))


def _failed(k, exc):
    nan = float("nan")
    return SingleVarResult(k, nan, np.empty(0), nan, nan, nan, type(exc).__name__)


def _residual_without(A, y, k, lam, full):
    # fit on X_{-k}; reuse the full-design fit when k is not in its support
    if full.beta_hat[k] == 0:
        return full.residual
    rest = np.asfortranarray(A[:, _others(A.shape[1], k)])
    return sqrt_lasso.fit(rest, y, lam).residual


def _one_variable(A, y, k, lam, gamma, full, sigma, E):
    try:
        w = nodewise_residual(A, k, gamma)
        r = _residual_without(A, y, k, lam, full)
        t_obs = _t_from_residual(w.w, r)
        if full.beta_hat[k] == 0:
            return k, w, t_obs, None
        rest = np.asfortranarray(A[:, _others(A.shape[1], k)])
        theta = sqrt_lasso.fit(rest, y, lam).beta_hat
        signal = rest @ theta
        t_boot = np.array(
            [_t_from_residual(w.w, sqrt_lasso.fit(rest, signal + sigma * e, lam).residual) for e in E]
        )
        return k, w, t_obs, t_boot
    except RPTestError as exc:
        return k, exc, None, None


def all_single_var_pvalues(
    X, y, B=100, src: ErrorSource | None = None, lam=None, n_jobs=1, intercept=None
):
    """Two-sided p-values for every predictor.

    Parameters
    ----------
    X : DesignMatrix or ndarray of shape (n, p)
    y : ndarray of shape (n,)
    B : int, default=100
    src : ErrorSource, optional
        Bootstrap errors; one draw per replicate is shared by all predictors.
    lam : float, optional
        Penalty for every outcome fit; defaults to
        :func:`~rptests.sqrt_lasso.default_lambda` for ``(n, p)``.
    n_jobs : int, default=1
    intercept : bool, optional
        Center the response and every bootstrap error vector, which fits an
        unpenalized intercept when the columns are centered. Defaults to
        whether ``X`` is a centered DesignMatrix.

    Returns
    -------
    list of SingleVarResult
        One record per predictor, in column order.
    """
    intercept = is_centered(X) if intercept is None else bool(intercept)
    A = np.asfortranarray(as_array(X))
    n, p = A.shape
    y = check_response(y, n)
    if B < 2:
        raise InvalidParam("B must be at least 2")
    src = src or ErrorSource()
    lam = sqrt_lasso.default_lambda(n, p) if lam is None else float(lam)
    gamma = sqrt_lasso.default_lambda(n, p - 1)
    E = null_errors(src, n, B)
    if intercept:
        y = y - y.mean()
        E = E - E.mean(axis=1, keepdims=True)
    full = sqrt_lasso.fit(A, y, lam)
    sigma = full.sigma_hat
    if not sigma > 0:
        raise DegenerateResidual("full-design fit interpolates the response")
    jobs = (delayed(_one_variable)(A, y, k, lam, gamma, full, sigma, E) for k in range(p))
    parts = Parallel(n_jobs=n_jobs)(jobs) if n_jobs != 1 else [f(*a, **kw) for f, a, kw in jobs]

    # predictors outside the full support share the null signal X beta_hat,
    # so each replicate needs one full-design fit plus refits for its support
    shared = [k for k, w, _, tb in parts if tb is None and not isinstance(w, Exception)]
    boot = {k: np.empty(B) for k in shared}
    if shared:
        signal = A @ full.beta_hat
        nodewise = {k: w for k, w, _, _ in parts}
        for b, e in enumerate(E):
            yb = signal + sigma * e
            fb = sqrt_lasso.fit(A, yb, lam)
            for k in shared:
                boot[k][b] = _t_from_residual(nodewise[k].w, _residual_without(A, yb, k, lam, fb))

    out = []
    for k, w, t_obs, t_boot in parts:
        if isinstance(w, Exception):
            out.append(_failed(k, w))
        else:
            out.append(_pvalue(k, t_obs, boot[k] if t_boot is None else t_boot))
    return out
