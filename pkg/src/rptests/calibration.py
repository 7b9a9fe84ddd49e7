"""Monte Carlo p-values for residual prediction statistics.

Small values of a residual prediction statistic mean the residuals were
predicted well, so the observed value is compared against the lower tail of
its simulated null distribution. Ties always count against rejection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import sqrt_lasso
from .core import ErrorSource, as_array, check_response, is_centered
from .exceptions import DegenerateColumn, InvalidParam
from .residuals import (
    lasso_scaled_residuals,
    ols_scaled_residuals,
    simulate_lasso_null,
    simulate_ols_null,
)

__all__ = [
    "AggregationResult",
    "RPTestResult",
    "mc_pvalue",
    "extremeness_scores",
    "aggregate_pvalue",
    "curves_pvalue",
    "rp_test",
    "modified_rp_test",
]

TIE_TOL = 1e-12
FULL_TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AggregationResult:
    q_tilde: np.ndarray
    q: float
    dropped_columns: tuple = ()


@dataclass(frozen=True, eq=False)
class RPTestResult:
    """Outcome of a residual prediction test.

    ``curves`` holds the statistic for the observed residuals in row 0 and
    for the simulated residuals in rows ``1..B``.
    """

    pvalue: float
    curves: np.ndarray
    beta_check: np.ndarray | None = None
    sigma_check: float | None = None
    lam: float | None = None
    q_tilde: np.ndarray | None = None
    dropped_columns: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def B(self) -> int:
        return self.curves.shape[0] - 1


def mc_pvalue(f_obs, f_sims) -> float:
    """``(1 + #{b : f_sims[b] <= f_obs}) / (B + 1)`` with a relative tie tolerance."""
    f_sims = np.asarray(f_sims, dtype=float).ravel()
    if f_sims.size < 1:
        raise InvalidParam("need at least one simulated value")
    if not (np.isfinite(f_obs) and np.all(np.isfinite(f_sims))):
        raise InvalidParam("statistics must be finite")
    hits = np.count_nonzero(f_sims <= f_obs + TIE_TOL * abs(f_obs))
    return (1 + hits) / (f_sims.size + 1)


def _loo_moments(curves):
    N = curves.shape[0]
    mu = curves.mean(axis=0)
    d = curves - mu
    ss = (d * d).sum(axis=0)
    loo_mean = mu - d / (N - 1)
    loo_var = (ss - d * d * N / (N - 1)) / (N - 2)
    return loo_mean, loo_var


def _degenerate(curves, loo_var):
    scale = np.abs(curves).max(axis=0)
    floor = (1e-12 * np.maximum(scale, 1e-300)) ** 2
    return np.any(loo_var <= floor, axis=0)


def _full_tie(curves):
    # rows that agree with the observed one up to solver rounding
    scale = np.maximum(np.abs(curves).max(axis=0), 1e-300)
    return bool(np.all(np.abs(curves - curves[0]) <= FULL_TIE_TOL * scale))


def extremeness_scores(curves, drop_degenerate=False):
    """Largest standardized drop of each row below the leave-one-out column means.

    Parameters
    ----------
    curves : ndarray of shape (B + 1, L)
    drop_degenerate : bool, default=False
        Ignore columns with a zero leave-one-out standard deviation instead
        of raising.

    Returns
    -------
    q_tilde : ndarray of shape (B + 1,)
    dropped : tuple of int
        Columns that were ignored.

    Raises
    ------
    DegenerateColumn
        For the first degenerate column, unless ``drop_degenerate`` is set
        and at least one column survives.
    """
    curves = np.asarray(curves, dtype=float)
    if curves.ndim == 1:
        curves = curves[:, None]
    if curves.shape[0] < 3:
        raise InvalidParam("need B >= 2 for leave-one-out standard deviations")
    if not np.all(np.isfinite(curves)):
        raise InvalidParam("curves must be finite")
    loo_mean, loo_var = _loo_moments(curves)
    bad = _degenerate(curves, loo_var)
    if bad.any() and (not drop_degenerate or bad.all()):
        raise DegenerateColumn(int(np.argmax(bad)))
    keep = ~bad
    z = (loo_mean[:, keep] - curves[:, keep]) / np.sqrt(loo_var[:, keep])
    return z.max(axis=1), tuple(int(j) for j in np.flatnonzero(bad))


def aggregate_pvalue(curves) -> AggregationResult:
    """Rank of the observed row's extremeness score among all ``B + 1`` rows.

    Degenerate columns are dropped with a warning when more than one column
    is present. A matrix whose rows all equal the observed row (to a relative
    ``1e-9`` per column) is a full tie and gives ``q = 1``.
    """
    curves = np.asarray(curves, dtype=float)
    if curves.ndim == 1:
        curves = curves[:, None]
    if curves.shape[0] >= 3 and _full_tie(curves):
        return AggregationResult(np.zeros(curves.shape[0]), 1.0, ())
    q_tilde, dropped = extremeness_scores(curves, drop_degenerate=curves.shape[1] > 1)
    if dropped:
        warnings.warn(
            f"dropped {len(dropped)} curve column(s) with zero spread", RuntimeWarning, stacklevel=2
        )
    q0 = q_tilde[0]
    hits = np.count_nonzero(q_tilde[1:] >= q0 - TIE_TOL * abs(q0))
    return AggregationResult(q_tilde, (1 + hits) / q_tilde.size, dropped)


def curves_pvalue(curves):
    """Single-statistic p-value when ``L == 1``, aggregated p-value otherwise."""
    curves = np.asarray(curves, dtype=float)
    if curves.ndim == 1 or curves.shape[1] == 1:
        c = curves.reshape(-1)
        return mc_pvalue(c[0], c[1:]), None, ()
    agg = aggregate_pvalue(curves)
    return agg.q, agg.q_tilde, agg.dropped_columns


def _evaluate(rp, R):
    rps = rp if isinstance(rp, (list, tuple)) else [rp]
    return np.hstack([np.asarray(f(R), dtype=float).reshape(R.shape[0], -1) for f in rps])


def _source(error_model, seed, pool):
    if error_model == "gaussian":
        return ErrorSource("gaussian", seed)
    if error_model == "resample":
        return ErrorSource("resample", seed, pool)
    raise InvalidParam(f"unknown error model {error_model!r}")


def rp_test(
    X,
    y,
    rp,
    B=249,
    lam=None,
    first_stage="lasso",
    error_model="gaussian",
    seed=0,
    cv=None,
    beta_check=None,
    n_jobs=1,
    intercept=None,
) -> RPTestResult:
    """Residual prediction test of a linear model for ``y`` on ``X``.

    Parameters
    ----------
    X : DesignMatrix or ndarray of shape (n, p)
    y : ndarray of shape (n,)
    rp : callable or list of callables
        Residual prediction function(s) mapping an ``(m, n)`` stack of unit
        residuals to an ``(m, L)`` array. Lists are concatenated column-wise.
    B : int, default=249
        Number of simulated residual vectors.
    lam : float, optional
        Penalty for the observed and simulated square-root Lasso fits;
        defaults to :func:`~rptests.sqrt_lasso.default_lambda`.
    first_stage : {"lasso", "ols"}
        ``"ols"`` uses least squares residuals, which needs ``p < n``.
    error_model : {"gaussian", "resample"}
        Null errors are standard normal, or drawn from the observed scaled
        residuals.
    seed : int
    cv : CvConfig, optional
        Cross-validation settings for the coefficients the null is built
        around. Ignored when ``beta_check`` is given.
    beta_check : ndarray of shape (p,), optional
    n_jobs : int, default=1
    intercept : bool, optional
        Fit an unpenalized intercept in every first-stage fit. Defaults to
        whether ``X`` is a centered DesignMatrix.
    """
    A = as_array(X)
    n, p = A.shape
    y = check_response(y, n)
    intercept = is_centered(X) if intercept is None else bool(intercept)
    if B < 1:
        raise InvalidParam("B must be at least 1")
    if first_stage == "ols":
        R0 = ols_scaled_residuals(X, y, intercept)
        src = _source(error_model, seed, R0)
        sims = simulate_ols_null(X, B, src, intercept)
        bc = sc = lam = None
    elif first_stage == "lasso":
        lam = sqrt_lasso.default_lambda(n, p) if lam is None else float(lam)
        yc = y - y.mean() if intercept else y
        if beta_check is None:
            cfg = cv or sqrt_lasso.CvConfig(seed=seed)
            bc = sqrt_lasso.cv_fit(A, y, cfg, intercept=intercept).beta_hat
        else:
            bc = np.asarray(beta_check, dtype=float)
        sc = sqrt_lasso.sigma_check(bc, A, yc)
        R0 = lasso_scaled_residuals(A, y, lam, intercept)
        src = _source(error_model, seed, R0)
        sims = simulate_lasso_null(bc, sc, A, lam, B, src, n_jobs=n_jobs, intercept=intercept)
    else:
        raise InvalidParam(f"unknown first stage {first_stage!r}")
    curves = _evaluate(rp, np.vstack([R0, sims]))
    pval, q_tilde, dropped = curves_pvalue(curves)
    return RPTestResult(pval, curves, bc, sc, lam, q_tilde, dropped)


def modified_rp_test(
    X, y, rp, B=249, lam=None, error_model="gaussian", seed=0, n_jobs=1, intercept=None
):
    """Conservative variant taking the maximum p-value over nested refits.

    The initial square-root Lasso support is ordered by decreasing absolute
    coefficient. For ``k = 0..s'`` the null is built around a refit on the
    ``k`` largest coefficients, all sharing one set of error draws. Intended
    for checking theory, not for routine use.

    Returns
    -------
    RPTestResult
        ``pvalue`` is the maximum; ``extra["q_k"]`` lists the per-``k`` values.
    """
    A = as_array(X)
    n, p = A.shape
    y = check_response(y, n)
    intercept = is_centered(X) if intercept is None else bool(intercept)
    yc = y - y.mean() if intercept else y
    lam = sqrt_lasso.default_lambda(n, p) if lam is None else float(lam)
    initial = sqrt_lasso.fit(A, yc, lam).beta_hat
    support = np.flatnonzero(initial)
    order = support[np.argsort(-np.abs(initial[support]), kind="stable")]
    R0 = lasso_scaled_residuals(A, y, lam, intercept)
    src = _source(error_model, seed, R0)
    qs, betas, stacks = [], [], []
    for k in range(order.size + 1):
        bc = np.zeros(p)
        if k:
            cols = order[:k]
            bc[cols] = sqrt_lasso.fit(A[:, cols], yc, lam).beta_hat
        sc = sqrt_lasso.sigma_check(bc, A, yc)
        sims = simulate_lasso_null(bc, sc, A, lam, B, src, n_jobs=n_jobs, intercept=intercept)
        curves = _evaluate(rp, np.vstack([R0, sims]))
        qs.append(curves_pvalue(curves)[0])
        betas.append(bc)
        stacks.append(curves)
    k_max = int(np.argmax(qs))
    return RPTestResult(
        max(qs), stacks[k_max], betas[k_max], sqrt_lasso.sigma_check(betas[k_max], A, yc), lam,
        extra={"q_k": np.array(qs)},
    )
