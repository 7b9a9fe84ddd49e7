"""Square-root Lasso.

Solves ``min_b ||y - X b||_2 / sqrt(n) + lam * ||b||_1`` through scaled-Lasso
alternation: a coordinate-descent pass on the ordinary Lasso with penalty
``lam * sigma`` followed by the update ``sigma = ||y - X b||_2 / sqrt(n)``.
Both blocks minimize the jointly convex objective
``||y - X b||^2 / (2 n sigma) + sigma / 2 + lam ||b||_1`` exactly, so the
alternation converges to the square-root Lasso solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import brentq, linprog
from scipy.stats import norm
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .core import as_array, check_response, rng_for
from .exceptions import InvalidParam, NonConvergence, ZeroResponse

__all__ = [
    "SqrtLassoFit",
    "CvConfig",
    "SqrtLasso",
    "SqrtLassoCV",
    "fit",
    "fit_path",
    "cv_fit",
    "lambda_max",
    "lambda_grid",
    "theoretical_lambda",
    "default_lambda",
    "sigma_check",
    "kkt_gap",
]

COEF_TOL = 1e-9
SIGMA_TOL = 1e-8
MAX_SWEEPS = 100_000
# Path fits stop once sigma_hat falls below this fraction of ||y|| / sqrt(n),
# i.e. once 99.9% of the response sum of squares is explained.
SATURATION = 10**-1.5

_CONVERGED, _INTERPOLATED, _MAX_ITER = 0, 1, 2
_FOLD_STREAM = 1


@njit(cache=True)
def _face_step(X, y, lam, beta, r, active, n_active, max_drops):
    """Move to the exact minimiser of the current sign face.

    With active set A and signs s fixed, stationarity gives
    ``b_A = u - n lam sigma G^{-1} s`` with ``u`` the least-squares fit on A
    and ``sigma = ||y - X_A u|| / sqrt(n - n^2 lam^2 s'G^{-1}s)``. If that
    point leaves the face, step along the segment to the first sign crossing
    (the objective is convex along it), drop that coordinate and retry. When
    the square root is undefined the face objective is unbounded below along
    ``-G^{-1}s``, and the same crossing rule applies to that ray.
    Returns True when the face minimiser was reached. Collinear active
    columns leave the point for coordinate descent to finish.
    """
    n = X.shape[0]
    idx = active[:n_active].copy()
    for _ in range(max_drops + 1):
        k = idx.shape[0]
        if k == 0 or k >= n:
            return False
        XA = np.empty((n, k))
        s = np.empty(k)
        bcur = np.empty(k)
        for t in range(k):
            j = idx[t]
            XA[:, t] = X[:, j]
            bcur[t] = beta[j]
            s[t] = 1.0 if beta[j] > 0 else -1.0
        G = XA.T @ XA
        ev = np.linalg.eigvalsh(G)
        if ev[0] <= 1e-10 * ev[-1]:
            # collinear active columns: the face has no unique minimiser
            return False
        u = np.linalg.solve(G, XA.T @ y)
        v = np.linalg.solve(G, s)
        r0 = y - XA @ u
        den = n - n * n * lam * lam * (s @ v)
        if not den > 0:
            # the face objective decreases without bound along -v, so the
            # minimiser lies on its boundary: follow -v to the first crossing
            step = np.inf
            hit = -1
            for t in range(k):
                if v[t] * s[t] > 0:
                    frac = bcur[t] / v[t]
                    if frac < step:
                        step = frac
                        hit = t
            if hit < 0:
                return False
            keep = np.empty(k - 1, dtype=np.int64)
            m = 0
            for t in range(k):
                beta[idx[t]] = 0.0 if t == hit else bcur[t] - step * v[t]
                if t != hit:
                    keep[m] = idx[t]
                    m += 1
            r[:] = y - X[:, idx] @ beta[idx]
            idx = keep
            continue
        sigma = np.sqrt((r0 @ r0) / den)
        bA = u - n * lam * sigma * v
        step = 1.0
        hit = -1
        for t in range(k):
            if not np.isfinite(bA[t]):
                return False
            if bA[t] * s[t] <= 0:
                frac = bcur[t] / (bcur[t] - bA[t])
                if frac < step:
                    step = frac
                    hit = t
        if hit < 0:
            for t in range(k):
                beta[idx[t]] = bA[t]
            r[:] = y - XA @ bA
            return True
        keep = np.empty(k - 1, dtype=np.int64)
        m = 0
        for t in range(k):
            nb = bcur[t] + step * (bA[t] - bcur[t])
            if t == hit:
                nb = 0.0
            beta[idx[t]] = nb
            if t != hit:
                keep[m] = idx[t]
                m += 1
        r[:] = y - X[:, idx] @ beta[idx]
        idx = keep
    return False


@njit(cache=True)
def _solve(X, y, lam, beta, colsq, coef_tol, sigma_tol, sigma_floor, ss_fixed, max_sweeps):
    n, p = X.shape
    r = y.copy()
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for i in range(n):
                r[i] -= bj * X[i, j]
    sqrt_n = np.sqrt(n)
    ss = 0.0
    for i in range(n):
        ss += r[i] * r[i]
    sigma = np.sqrt(ss) / sqrt_n
    # ss_fixed is the part of ||r||^2 no coefficient vector can remove
    floor_ss = sigma_floor * sigma_floor * n + ss_fixed
    if ss <= floor_ss:
        return _INTERPOLATED, 0, sigma
    active = np.empty(p, dtype=np.int64)
    n_active = 0
    full = True
    inner = 0
    next_polish = 10
    sweeps = 0
    status = _MAX_ITER
    while sweeps < max_sweeps:
        thresh = n * lam * sigma
        maxd = 0.0
        count = p if full else n_active
        for t in range(count):
            j = t if full else active[t]
            cj = colsq[j]
            if cj == 0.0:
                continue
            bj = beta[j]
            g = 0.0
            for i in range(n):
                g += X[i, j] * r[i]
            g += cj * bj
            if g > thresh:
                nb = (g - thresh) / cj
            elif g < -thresh:
                nb = (g + thresh) / cj
            else:
                nb = 0.0
            d = nb - bj
            if d != 0.0:
                for i in range(n):
                    r[i] -= d * X[i, j]
                beta[j] = nb
                ad = abs(d)
                if ad > maxd:
                    maxd = ad
        sweeps += 1
        ss = 0.0
        for i in range(n):
            ss += r[i] * r[i]
        new_sigma = np.sqrt(ss) / sqrt_n
        dsig = abs(new_sigma - sigma)
        sigma = new_sigma
        if ss <= floor_ss:
            status = _INTERPOLATED
            break
        conv = maxd <= coef_tol and dsig <= sigma_tol * sigma
        if full:
            if conv:
                status = _CONVERGED
                break
            n_active = 0
            for j in range(p):
                if beta[j] != 0.0:
                    active[n_active] = j
                    n_active += 1
            full = False
            inner = 0
            next_polish = 10
        elif conv:
            full = True
        else:
            inner += 1
            if inner == next_polish:
                # slow coordinate descent: jump to the exact solution for the sign pattern
                next_polish += 25
                _face_step(X, y, lam, beta, r, active, n_active, 10)
                ss = 0.0
                for i in range(n):
                    ss += r[i] * r[i]
                sigma = np.sqrt(ss) / sqrt_n
                full = True
    return status, sweeps, sigma


@njit(cache=True)
def _path(X, y, lams, colsq, coef_tol, sigma_tol, sigma_floor, ss_fixed, max_sweeps):
    L = lams.shape[0]
    p = X.shape[1]
    betas = np.zeros((L, p))
    sigmas = np.zeros(L)
    status = np.zeros(L, dtype=np.int64)
    beta = np.zeros(p)
    saturated = False
    for l in range(L):
        if not saturated:
            st, _, sig = _solve(
                X, y, lams[l], beta, colsq, coef_tol, sigma_tol, sigma_floor, ss_fixed, max_sweeps
            )
            status[l] = st
            sigmas[l] = sig
            if st == _INTERPOLATED:
                saturated = True
        else:
            status[l] = _INTERPOLATED
            sigmas[l] = sigmas[l - 1]
        betas[l] = beta
    return betas, sigmas, status


@dataclass(frozen=True, eq=False)
class SqrtLassoFit:
    """One square-root Lasso solve.

    ``kkt_gap`` is the largest violation of the optimality conditions,
    relative to ``lam``.
    """

    beta_hat: np.ndarray
    lam: float
    sigma_hat: float
    residual: np.ndarray
    n_sweeps: int = 0
    kkt_gap: float = 0.0

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta_hat)


@dataclass(frozen=True)
class CvConfig:
    n_folds: int = 10
    n_repeats: int = 8
    grid_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_folds < 2:
            raise InvalidParam("n_folds must be at least 2")
        if self.n_repeats < 1 or self.grid_size < 2:
            raise InvalidParam("n_repeats >= 1 and grid_size >= 2 required")


def _prepare(X, y):
    X = np.asfortranarray(as_array(X))
    y = check_response(y, X.shape[0])
    return X, y


def _fixed_ss(X, y):
    # with every column orthogonal to the constant vector, the mean of y
    # stays in the residual whatever the coefficients
    n = X.shape[0]
    if np.abs(X.sum(axis=0)).max() <= 1e-10 * np.sqrt(n) * np.sqrt((X * X).sum(axis=0)).max():
        return float(y.sum() ** 2 / n)
    return 0.0


def _interpolation_gap(X, beta, lam, v=None):
    # at r = 0 optimality needs u with ||u|| <= 1 and X'u / sqrt(n) in
    # lam * d||beta||_1; with u = lam sqrt(n) v this is the basis pursuit
    # dual condition plus ||v|| <= 1 / (lam sqrt(n))
    act = beta != 0
    if v is None:
        v = np.linalg.lstsq(X[:, act].T, np.sign(beta[act]), rcond=None)[0]
    c = X.T @ v
    gaps = [lam * np.sqrt(X.shape[0]) * np.linalg.norm(v) - 1, np.abs(c).max() - 1]
    if act.any():
        gaps.append(np.abs(c[act] - np.sign(beta[act])).max())
    return float(max(max(gaps), 0.0))


def _basis_pursuit(X, y, lam):
    """Minimum l1-norm interpolant and its optimality gap for the square-root Lasso."""
    n, p = X.shape
    res = linprog(
        np.ones(2 * p), A_eq=np.hstack([X, -X]), b_eq=y, bounds=(0, None), method="highs"
    )
    if res.status != 0:
        return None, np.inf
    beta = res.x[:p] - res.x[p:]
    beta[np.abs(beta) <= 1e-12 * np.abs(beta).max()] = 0.0
    # the LP dual may be any optimal point; fall back to the least-norm one
    gap = min(_interpolation_gap(X, beta, lam, res.eqlin.marginals), _interpolation_gap(X, beta, lam))
    return beta, gap


def kkt_gap(X, y, beta, lam) -> float:
    """Largest relative violation of the square-root Lasso optimality conditions.

    For an interpolating ``beta`` the conditions involve a dual vector
    instead of the residual direction; the least-norm candidate is checked.
    """
    X, y = _prepare(X, y)
    beta = np.asarray(beta, dtype=float)
    r = y - X @ beta
    rn = np.linalg.norm(r)
    if rn <= 1e-9 * np.linalg.norm(y):
        return _interpolation_gap(X, beta, lam) if rn < np.linalg.norm(y) else 0.0
    z = X.T @ r / (np.sqrt(X.shape[0]) * rn)
    act = beta != 0
    viol = np.zeros_like(z)
    viol[act] = np.abs(z[act] - lam * np.sign(beta[act]))
    viol[~act] = np.maximum(np.abs(z[~act]) - lam, 0.0)
    return float(viol.max() / lam) if viol.size else 0.0


def _ols_fit(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return SqrtLassoFit(coef, 0.0, float(np.linalg.norm(r) / np.sqrt(len(y))), r)


def fit(X, y, lam, beta_init=None, tol=COEF_TOL, max_sweeps=MAX_SWEEPS) -> SqrtLassoFit:
    """Square-root Lasso at a fixed tuning parameter.

    Parameters
    ----------
    X : DesignMatrix or ndarray of shape (n, p)
        Columns are expected to have norm ``sqrt(n)``.
    y : ndarray of shape (n,)
    lam : float
        Penalty in the square-root parametrisation. ``lam = 0`` is allowed for
        ``p < n`` and returns least squares.
    beta_init : ndarray, optional
        Warm start. The default starts coordinate descent from zero.

    Raises
    ------
    NonConvergence
        If the sweep cap is hit.
    """
    X, y = _prepare(X, y)
    n, p = X.shape
    if lam < 0 or not np.isfinite(lam):
        raise InvalidParam("lam must be a finite non-negative number")
    if lam == 0:
        if p >= n:
            raise InvalidParam("lam = 0 is only defined for p < n")
        return _ols_fit(X, y)
    beta = np.zeros(p) if beta_init is None else np.array(beta_init, dtype=float)
    ynorm = np.linalg.norm(y)
    if ynorm == 0:
        return SqrtLassoFit(beta * 0.0, float(lam), 0.0, y.copy())
    if lam * (1 + 1e-12) >= np.abs(X.T @ y).max() / (np.sqrt(n) * ynorm):
        # zero is optimal; skip the solver so rounding cannot leave dust
        return SqrtLassoFit(np.zeros(p), float(lam), float(ynorm / np.sqrt(n)), y.copy(), 0, 0.0)
    colsq = (X * X).sum(axis=0)
    status, sweeps, _ = _solve(
        X, y, float(lam), beta, colsq, tol * ynorm / np.sqrt(n), SIGMA_TOL,
        1e-13 * ynorm / np.sqrt(n), _fixed_ss(X, y), int(max_sweeps),
    )
    if status == _MAX_ITER:
        raise NonConvergence(sweeps, kkt_gap(X, y, beta, lam))
    if status == _INTERPOLATED and p >= n:
        # once sigma collapses the alternation is plain least squares and
        # stops at an arbitrary interpolant; the optimal one has minimal l1 norm
        bp, gap = _basis_pursuit(X, y, float(lam))
        if gap > 1e-6:
            raise NonConvergence(sweeps, gap)
        r = y - X @ bp
        return SqrtLassoFit(bp, float(lam), float(np.linalg.norm(r) / np.sqrt(n)), r, int(sweeps), gap)
    r = y - X @ beta
    return SqrtLassoFit(
        beta, float(lam), float(np.linalg.norm(r) / np.sqrt(n)), r, int(sweeps),
        kkt_gap(X, y, beta, lam),
    )


def fit_path(X, y, lams, tol=COEF_TOL, saturation=SATURATION, max_sweeps=MAX_SWEEPS):
    """Warm-started fits along a descending grid.

    Returns ``(betas, sigmas, saturated)`` where ``betas`` has one row per grid
    point. Once the removable part of the residual falls below ``saturation``
    times its starting size the fit is treated as interpolating and later
    rows repeat the last solution; ``saturated`` flags those rows. When all
    columns are centered, the mean of ``y`` is not removable.
    """
    X, y = _prepare(X, y)
    lams = np.asarray(lams, dtype=float)
    if np.any(np.diff(lams) > 0):
        raise InvalidParam("grid must be descending")
    n = X.shape[0]
    ynorm = np.linalg.norm(y)
    if ynorm == 0:
        raise ZeroResponse("response is identically zero")
    colsq = (X * X).sum(axis=0)
    fixed = _fixed_ss(X, y)
    movable = np.sqrt(max(ynorm**2 - fixed, 0.0) / n)
    betas, sigmas, status = _path(
        X, y, lams, colsq, tol * ynorm / np.sqrt(n), SIGMA_TOL,
        saturation * movable, fixed, int(max_sweeps),
    )
    if np.any(status == _MAX_ITER):
        l = int(np.argmax(status == _MAX_ITER))
        raise NonConvergence(max_sweeps, kkt_gap(X, y, betas[l], lams[l]))
    return betas, sigmas, status == _INTERPOLATED


def lambda_max(X, y) -> float:
    """Smallest penalty at which the square-root Lasso returns zero."""
    X, y = _prepare(X, y)
    ynorm = np.linalg.norm(y)
    if ynorm == 0:
        raise ZeroResponse("response is identically zero")
    return float(np.abs(X.T @ y).max() / (np.sqrt(X.shape[0]) * ynorm))


def lambda_grid(X, y, L: int = 100, min_ratio: float = 1e-3) -> np.ndarray:
    """Geometric grid of ``L`` penalties from ``lambda_max`` down to ``min_ratio`` times it."""
    if L < 2:
        raise InvalidParam("grid needs at least two points")
    lmax = lambda_max(X, y)
    return lmax * np.geomspace(1.0, min_ratio, L)


def theoretical_lambda(n, p, A=np.sqrt(2), eta=1.0) -> float:
    """``A * sqrt(2 log(p / eta) / n)``."""
    if A <= 0 or eta <= 0:
        raise InvalidParam("A and eta must be positive")
    if eta >= p:
        raise InvalidParam("eta must be smaller than p")
    return float(A * np.sqrt(2 * np.log(p / eta) / n))


def default_lambda(n, p) -> float:
    """Quantile-based fixed penalty ``sqrt(2/n) * L``.

    ``L`` solves ``L = -Phi^{-1}(min(k/p, 0.99))`` with ``k = L^4 + 2 L^2``.
    The gap ``L + Phi^{-1}(min(k/p, 0.99))`` is increasing in ``L``, so the
    root is unique and is bracketed on ``(0, -Phi^{-1}(1/p)]``. For ``p = 1``
    the level is fixed at ``L = 0.5``.
    """
    if n < 2 or p < 1:
        raise InvalidParam("need n >= 2 and p >= 1")
    if p == 1:
        level = 0.5
    else:
        gap = lambda L: L + norm.ppf(min((L**4 + 2 * L**2) / p, 0.99))
        level = brentq(gap, 1e-12, max(-norm.ppf(1.0 / p), 1.0), xtol=1e-14)
    return float(np.sqrt(2.0 / n) * level)


def sigma_check(fit_or_beta, X, y) -> float:
    """Normalised residual norm ``||y - X beta||_2 / sqrt(n)``."""
    beta = getattr(fit_or_beta, "beta_hat", fit_or_beta)
    X, y = _prepare(X, y)
    return float(np.linalg.norm(y - X @ np.asarray(beta, dtype=float)) / np.sqrt(len(y)))


def cv_fit(X, y, cfg: CvConfig = CvConfig(), intercept=False) -> SqrtLassoFit:
    """Fit at the penalty minimising cross-validated squared error.

    Prediction errors are pooled over all folds of ``cfg.n_repeats`` random
    partitions into ``cfg.n_folds`` folds; the partitions depend only on
    ``cfg.seed``. With ``intercept`` every training fold is centered and its
    means are used to predict the held-out rows; the returned fit is then
    for centered ``y`` (``X`` is assumed centered).
    """
    X, y = _prepare(X, y)
    n = X.shape[0]
    if n < 2 * cfg.n_folds:
        raise InvalidParam("need at least two observations per fold")
    if intercept:
        y = y - y.mean()
    grid = lambda_grid(X, y, cfg.grid_size)
    sse = np.zeros(cfg.grid_size)
    for rep in range(cfg.n_repeats):
        perm = rng_for(cfg.seed, _FOLD_STREAM, rep).permutation(n)
        for test in np.array_split(perm, cfg.n_folds):
            train = np.ones(n, dtype=bool)
            train[test] = False
            Xtr, ytr, Xte, yte = X[train], y[train], X[test], y[test]
            if intercept:
                xm, ym = Xtr.mean(axis=0), ytr.mean()
                Xtr, ytr, Xte, yte = Xtr - xm, ytr - ym, Xte - xm, yte - ym
            if not np.any(ytr):
                sse += (yte**2).sum()
                continue
            betas, _, _ = fit_path(Xtr, ytr, grid)
            pred = Xte @ betas.T
            sse += ((yte[:, None] - pred) ** 2).sum(axis=0)
    best = int(np.argmin(sse))
    return fit(X, y, grid[best])


class SqrtLasso(RegressorMixin, BaseEstimator):
    """Square-root Lasso regressor (no intercept; center data beforehand).

    Parameters
    ----------
    lam : float or None, default=None
        Penalty level. ``None`` uses :func:`default_lambda`.
    tol : float, default=1e-9
        Coordinate change tolerance relative to ``||y|| / sqrt(n)``.
    max_sweeps : int, default=100000

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    sigma_ : float
        Normalised residual norm.
    lam_ : float
    active_set_ : ndarray
    kkt_gap_ : float
    """

    def __init__(self, lam=None, tol=COEF_TOL, max_sweeps=MAX_SWEEPS):
        self.lam = lam
        self.tol = tol
        self.max_sweeps = max_sweeps

    def fit(self, X, y):
        X, y = _prepare(X, y)
        lam = default_lambda(*X.shape) if self.lam is None else self.lam
        res = fit(X, y, lam, tol=self.tol, max_sweeps=self.max_sweeps)
        self._set_from(res, X, y)
        return self

    def _set_from(self, res, X, y):
        self.coef_ = res.beta_hat
        self.sigma_ = res.sigma_hat
        self.lam_ = res.lam
        self.active_set_ = res.active_set
        self.kkt_gap_ = res.kkt_gap
        self.n_features_in_ = X.shape[1]

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return as_array(X) @ self.coef_


class SqrtLassoCV(SqrtLasso):
    """Square-root Lasso with penalty chosen by repeated K-fold cross-validation.

    Parameters
    ----------
    n_folds : int, default=10
    n_repeats : int, default=8
    grid_size : int, default=100
    random_state : int, default=0
    """

    def __init__(self, n_folds=10, n_repeats=8, grid_size=100, random_state=0):
        self.n_folds = n_folds
        self.n_repeats = n_repeats
        self.grid_size = grid_size
        self.random_state = random_state

    def fit(self, X, y):
        X, y = _prepare(X, y)
        cfg = CvConfig(self.n_folds, self.n_repeats, self.grid_size, int(self.random_state))
        self._set_from(cv_fit(X, y, cfg), X, y)
        return self
