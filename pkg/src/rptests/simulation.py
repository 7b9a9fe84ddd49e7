"""Simulation studies: designs, signals, alternatives and p-value summaries.

Every random quantity comes from a keyed stream derived from the study seed,
so a single design, coefficient draw or response can be regenerated on its
own. Keys used by :func:`run_study`:

====================  ===========================
stream                key
====================  ===========================
design ``d``          ``(seed, 1, d)``
coefficients          ``(seed, 2, d)``
group split           ``(seed, 3, d)``
alternative extras    ``(seed, 4, d)``
response ``(d, r)``   ``(seed, 5, d, r)``
test ``(d, r)``       ``(seed, 6, d, r)``
====================  ===========================
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.stats import binom, f as f_dist, ncf

from . import __version__
from .core import DesignMatrix, LinearModelSpec, derive_seed, rng_for, standardize
from .exceptions import DegenerateScale, FactorizationFailure, InvalidParam, RPTestError
from .procedures import (
    group_test,
    hetero_test,
    nonlinearity_test,
    random_group_split,
    residualized_group,
)
from .residuals import ols_basis

__all__ = [
    "DESIGN_KINDS",
    "Scenario",
    "StudyReport",
    "NullEnvelope",
    "design_covariance",
    "gen_design",
    "gen_coefficients",
    "gen_errors",
    "gen_response",
    "nonlinear_signal",
    "hetero_variances",
    "null_envelope",
    "ecdf",
    "run_study",
    "f_test_sigma",
]

DESIGN_KINDS = ("toeplitz", "exp_decay", "equal_corr")
ALTERNATIVES = ("null", "group", "nonlinear", "hetero")
TESTS = ("group", "nonlin", "hetero")
ERRORS = ("gaussian", "t3", "exp")


def design_covariance(kind, p):
    """Covariance matrix of the named design, or its inverse for ``exp_decay``."""
    lag = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    if kind == "toeplitz":
        return 0.9**lag
    if kind == "exp_decay":
        return 0.4 ** (lag / 5)
    if kind == "equal_corr":
        return np.where(lag == 0, 1.0, 0.8)
    raise InvalidParam(f"unknown design kind {kind!r}")


@lru_cache(maxsize=8)
def _factor(kind, p):
    try:
        return linalg.cholesky(design_covariance(kind, p), lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationFailure(f"{kind} matrix is not positive definite") from exc


def gen_design(kind, n, p, seed, path=None, top_variance=None) -> DesignMatrix:
    """Standardized design with i.i.d. Gaussian rows, or one read from ``path``.

    For ``exp_decay`` the matrix of ``0.4^{|j-k|/5}`` is the precision, so
    rows are drawn through the inverse transpose of its Cholesky factor.
    File designs can be screened to the ``top_variance`` columns of largest
    empirical variance.
    """
    if kind == "file":
        from .io import read_matrix

        raw = read_matrix(path)
        if top_variance is not None and top_variance < raw.shape[1]:
            keep = np.sort(np.argsort(-raw.var(axis=0), kind="stable")[:top_variance])
            raw = raw[:, keep]
        return standardize(raw)
    L = _factor(kind, p)
    Z = rng_for(seed).standard_normal((n, p))
    if kind == "exp_decay":
        raw = linalg.solve_triangular(L, Z.T, lower=True, trans="T").T
    else:
        raw = Z @ L.T
    return standardize(raw)


def gen_coefficients(scheme, p, seed, s=12) -> LinearModelSpec:
    """Sparse coefficients on ``s`` random indices.

    ``uniform`` draws i.i.d. Unif[-2, 2] values. ``decay`` sets the ``k``-th
    chosen index to a value proportional to ``1/sqrt(k)``, scaled so the
    l1-norm equals ``s``.
    """
    if s > p:
        raise InvalidParam("support larger than p")
    rng = rng_for(seed)
    support = rng.choice(p, s, replace=False)
    beta = np.zeros(p)
    if scheme == "uniform":
        beta[support] = rng.uniform(-2, 2, s)
    elif scheme == "decay":
        w = 1 / np.sqrt(np.arange(1, s + 1))
        beta[support] = w * (s / w.sum())
    else:
        raise InvalidParam(f"unknown coefficient scheme {scheme!r}")
    return LinearModelSpec(beta)


def gen_errors(kind, n, rng):
    """Unit-variance errors: Gaussian, scaled t with 3 df, or centered Exp(1)."""
    if kind == "gaussian":
        return rng.standard_normal(n)
    if kind == "t3":
        return rng.standard_t(3, n) / np.sqrt(3.0)
    if kind == "exp":
        return rng.exponential(1.0, n) - 1.0
    raise InvalidParam(f"unknown error distribution {kind!r}")


def nonlinear_signal(X_S, seed):
    """Sum of products of random sigmoids over four triples of columns.

    The result is scaled so its residual after least squares on an intercept
    and ``X_S`` has empirical variance 2.
    """
    X_S = np.asarray(X_S, dtype=float)
    if X_S.shape[1] != 12:
        raise InvalidParam("nonlinear signal needs exactly 12 columns")
    rng = rng_for(seed)
    groups = rng.permutation(12).reshape(4, 3)
    a = rng.standard_normal(12)
    b = rng.standard_normal(12)
    T = 1 / (1 + np.exp(-5 * (a + b * X_S)))
    coef = rng.uniform(-1, 1, 4)
    f = sum(c * T[:, g].prod(axis=1) for c, g in zip(coef, groups))
    Q = ols_basis(X_S, intercept=True)
    res = f - Q @ (Q.T @ f)
    v = res.var()
    if not v > 1e-24 * max(f.var(), 1e-300):
        raise DegenerateScale("nonlinear term is linear in the support columns")
    return f * np.sqrt(2 / v)


def hetero_variances(X_S, seed):
    """Variance profile from three random support columns.

    A Unif[-2, 2] combination of the columns is shifted to have minimum
    0.01 and then scaled to have mean 1. Returns the profile and the
    minimum before scaling.
    """
    X_S = np.asarray(X_S, dtype=float)
    if X_S.shape[1] < 3:
        raise InvalidParam("need at least three support columns")
    rng = rng_for(seed)
    cols = rng.choice(X_S.shape[1], 3, replace=False)
    v = X_S[:, cols] @ rng.uniform(-2, 2, 3)
    v = v - v.min() + 0.01
    before = float(v.min())
    return v / v.mean(), before


def gen_response(X, spec: LinearModelSpec, alternative="null", seed=0, errors="gaussian",
                 group=None, extra_seed=None):
    """Response from the linear model plus the named departure.

    Parameters
    ----------
    X : DesignMatrix or ndarray
    spec : LinearModelSpec
    alternative : {"null", "group", "nonlinear", "hetero"}
    seed : int
        Seed of the error draw.
    errors : {"gaussian", "t3", "exp"}
    group : array of int, optional
        Columns the ``group`` alternative may add signal to.
    extra_seed : int, optional
        Seed for the random parts of the alternative. Defaults to a stream
        derived from ``seed``; pass a fixed value to share them across
        responses.

    Returns
    -------
    y : ndarray
    truth : dict
        Ground truth: full coefficients, support and alternative internals.
    """
    A = np.asarray(X)
    n = A.shape[0]
    extra_seed = derive_seed(seed, 1) if extra_seed is None else extra_seed
    beta = spec.beta.copy()
    mean = A @ beta
    scale = np.ones(n)
    truth = {"alternative": alternative, "sigma": spec.sigma}
    S = spec.support
    if alternative == "group":
        if group is None:
            raise InvalidParam("group alternative needs the tested group")
        rng = rng_for(extra_seed)
        added = rng.choice(np.asarray(group), 12, replace=False)
        beta[added] = rng.uniform(-2, 2, 12)
        mean = A @ beta
        truth["added"] = np.sort(added)
    elif alternative == "nonlinear":
        f = nonlinear_signal(A[:, S], extra_seed)
        mean = mean + f
        truth["nonlinear"] = f
    elif alternative == "hetero":
        v, before = hetero_variances(A[:, S], extra_seed)
        scale = np.sqrt(v)
        truth["variances"] = v
        truth["min_before_scaling"] = before
        truth["min_after_scaling"] = float(v.min())
    elif alternative != "null":
        raise InvalidParam(f"unknown alternative {alternative!r}")
    eps = gen_errors(errors, n, rng_for(seed))
    truth["beta"] = beta
    truth["support"] = np.flatnonzero(beta)
    return mean + spec.sigma * scale * eps, truth


@dataclass(frozen=True)
class NullEnvelope:
    """Pointwise binomial quantile curve calibrated for simultaneous coverage.

    ``m`` is the number of p-values per empirical CDF. ``q(x)`` is the upper
    ``alpha`` quantile of ``Bin(m, x) / m``, with ``alpha`` chosen so that
    the ECDF of ``m`` uniform p-values exceeds ``q`` somewhere on
    ``[0, x_max]`` with probability ``1 / r``.
    """

    m: int
    r: int
    x_max: float
    alpha: float

    def q(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return binom.ppf(1 - self.alpha, self.m, x) / self.m

    def curve(self, n_points=101):
        x = np.linspace(0, self.x_max, n_points)
        return x, self.q(x)

    def escapes(self, u):
        """Whether each row of sorted-or-not uniforms ``u`` escapes the envelope."""
        return _min_tail(np.asarray(u, dtype=float), self.x_max) <= self.alpha


def _min_tail(u, x_max):
    # the ECDF of a row first reaches i/m at its i-th order statistic u_(i);
    # it lies above the quantile curve there iff P(Bin(m, u_(i)) >= i) <= alpha
    u = np.sort(np.atleast_2d(u), axis=1)
    m = u.shape[1]
    i = np.arange(1, m + 1)
    tail = binom.sf(i - 1, m, u)
    tail[u > x_max] = np.inf
    return tail.min(axis=1)


def null_envelope(B, r=25, x_max=0.1, n_sim=10_000, seed=0) -> NullEnvelope:
    """Envelope for ECDFs of ``B + 1`` null p-values, escaped by 1 in ``r`` curves.

    Escape is checked at the ECDF jump points, where the maximum of
    ``ECDF - q`` is attained, so no grid over ``x`` is needed. ``alpha`` is
    the ``1/r`` quantile of the per-draw minimum binomial tail probability.
    """
    if B < 1 or r < 2:
        raise InvalidParam("need B >= 1 and r >= 2")
    m = B + 1
    u = rng_for(seed).random((n_sim, m))
    tails = np.sort(_min_tail(u, x_max))
    k = max(int(np.floor(n_sim / r)), 1)
    return NullEnvelope(m, r, float(x_max), float(tails[k - 1]))


def ecdf(pvalues, grid):
    """Right-continuous empirical CDF of ``pvalues`` evaluated at ``grid``."""
    pv = np.sort(np.asarray(pvalues, dtype=float))
    pv = pv[np.isfinite(pv)]
    if pv.size == 0:
        return np.full(len(grid), np.nan)
    return np.searchsorted(pv, np.asarray(grid, dtype=float), side="right") / pv.size


@dataclass(frozen=True)
class Scenario:
    """One cell of a simulation study.

    ``n_designs`` design matrices are drawn, each with its own coefficients
    (and group split for the group test); ``reps`` responses are generated
    per design.
    """

    design: str = "toeplitz"
    n: int = 100
    p: int = 500
    scheme: str = "uniform"
    alternative: str = "null"
    test: str = "group"
    errors: str = "gaussian"
    error_model: str = "gaussian"
    sigma: float = 1.0
    n_designs: int = 5
    reps: int = 40
    B: int = 99
    seed: int = 0

    def __post_init__(self):
        if self.design not in DESIGN_KINDS:
            raise InvalidParam(f"unknown design {self.design!r}")
        if self.alternative not in ALTERNATIVES:
            raise InvalidParam(f"unknown alternative {self.alternative!r}")
        if self.test not in TESTS:
            raise InvalidParam(f"unknown test {self.test!r}")
        if self.errors not in ERRORS:
            raise InvalidParam(f"unknown error distribution {self.errors!r}")
        if self.n_designs < 1 or self.reps < 0 or self.B < 2:
            raise InvalidParam("need n_designs >= 1, reps >= 0 and B >= 2")
        if self.alternative == "group" and self.test != "group":
            raise InvalidParam("the group alternative is only defined for the group test")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class StudyReport:
    """P-values of a study, one row per design and one column per response.

    Failed repetitions hold NaN and are listed in ``failures``.
    """

    scenario: Scenario
    pvalues: np.ndarray
    failures: list = field(default_factory=list)
    elapsed: float = 0.0

    GRID = np.round(np.linspace(0, 1, 101), 10)

    @property
    def digest(self) -> str:
        return self.scenario.digest()

    def ecdfs(self, grid=None):
        grid = self.GRID if grid is None else grid
        return np.array([ecdf(row, grid) for row in self.pvalues]).reshape(len(self.pvalues), -1)

    def size(self, level=0.05):
        """Fraction of finite p-values at or below ``level``, overall and per design."""
        pv = self.pvalues
        ok = np.isfinite(pv)
        overall = float((pv[ok] <= level).mean()) if ok.any() else float("nan")
        per = [float((r[np.isfinite(r)] <= level).mean()) if np.isfinite(r).any() else float("nan")
               for r in pv]
        return overall, per

    def envelope(self, x_max=0.1, n_sim=10_000):
        """Null envelope for ECDFs of this study's size, escaped by one design in ``n_designs``."""
        r = max(self.scenario.n_designs, 2)
        return null_envelope(max(self.scenario.reps - 1, 1), r, x_max, n_sim, self.scenario.seed)

    def to_dict(self, include_timing=False):
        pv = self.pvalues
        overall, per = self.size()
        out = {
            "schema_version": 1,
            "version": __version__,
            "scenario": asdict(self.scenario),
            "digest": self.digest,
            "pvalues": [[None if not np.isfinite(v) else float(v) for v in row] for row in pv],
            "size_at_0.05": overall,
            "size_at_0.05_per_design": per,
            "median_pvalue": float(np.nanmedian(pv)) if np.isfinite(pv).any() else None,
            "failures": self.failures,
        }
        if self.scenario.reps >= 2:
            env = self.envelope()
            x, q = env.curve(11)
            out["envelope"] = {"alpha": env.alpha, "x": x.tolist(), "q": q.tolist()}
        if include_timing:
            out["elapsed_seconds"] = self.elapsed
        return out

    def to_json(self, path=None, include_timing=False):
        text = json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def write_ecdf_csv(self, path):
        """Write ``x`` and one ECDF column per design for external plotting."""
        E = self.ecdfs()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x"] + [f"design_{d}" for d in range(len(E))])
            for i, x in enumerate(self.GRID):
                w.writerow([repr(float(x))] + [repr(float(e[i])) for e in E])


def _design_setup(sc: Scenario, d):
    X = gen_design(sc.design, sc.n, sc.p, derive_seed(sc.seed, 1, d))
    spec = gen_coefficients(sc.scheme, sc.p, derive_seed(sc.seed, 2, d))
    spec = LinearModelSpec(spec.beta, sc.sigma)
    group = Z = None
    if sc.test == "group":
        group, _ = random_group_split(sc.p, spec.support, derive_seed(sc.seed, 3, d))
        Z = residualized_group(X, group)
    return X, spec, group, Z


def _one_rep(sc: Scenario, d, r, X, spec, group, Z):
    y, _ = gen_response(
        X, spec, sc.alternative, derive_seed(sc.seed, 5, d, r), sc.errors, group,
        extra_seed=derive_seed(sc.seed, 4, d),
    )
    seed = derive_seed(sc.seed, 6, d, r)
    kw = dict(B=sc.B, seed=seed, error_model=sc.error_model)
    if sc.test == "group":
        return group_test(X, y, group, residualized=Z, **kw).pvalue
    if sc.test == "nonlin":
        return nonlinearity_test(X, y, **kw).pvalue
    return hetero_test(X, y, **kw).pvalue


def _run_design(sc: Scenario, d):
    out = np.full(sc.reps, np.nan)
    failures = []
    try:
        setup = _design_setup(sc, d)
    except RPTestError as exc:
        return out, [{"design": d, "rep": None, "error": type(exc).__name__, "message": str(exc)}]
    for r in range(sc.reps):
        try:
            out[r] = _one_rep(sc, d, r, *setup)
        except RPTestError as exc:
            failures.append({"design": d, "rep": r, "error": type(exc).__name__, "message": str(exc)})
    return out, failures


def run_study(sc: Scenario, n_jobs=1) -> StudyReport:
    """Run every design and repetition of ``sc``; designs are the unit of parallel work.

    Results depend only on ``sc`` (not on ``n_jobs``). Computational errors
    in a repetition are recorded in the report rather than raised.
    """
    start = time.perf_counter()
    if sc.reps == 0:
        return StudyReport(sc, np.empty((sc.n_designs, 0)), [], 0.0)
    if n_jobs == 1:
        parts = [_run_design(sc, d) for d in range(sc.n_designs)]
    else:
        parts = Parallel(n_jobs=n_jobs)(delayed(_run_design)(sc, d) for d in range(sc.n_designs))
    pv = np.vstack([p for p, _ in parts])
    failures = [f for _, fl in parts for f in fl]
    return StudyReport(sc, pv, failures, time.perf_counter() - start)


def f_test_sigma(X_null, X_extra, signal, power=0.5, level=0.05, tol=1e-6):
    """Noise level at which the partial F-test of ``X_extra`` has the given power.

    ``signal`` is the mean response. Its component outside the null column
    space, together with the F degrees of freedom, fixes the noncentral F
    power as a decreasing function of sigma, which is solved by bisection.
    """
    Q0 = ols_basis(X_null, intercept=True)
    Q1 = ols_basis(np.column_stack([np.asarray(X_null), np.asarray(X_extra)]), intercept=True)
    n = Q0.shape[0]
    df1 = Q1.shape[1] - Q0.shape[1]
    df2 = n - Q1.shape[1]
    signal = np.asarray(signal, dtype=float)
    part = Q1 @ (Q1.T @ signal) - Q0 @ (Q0.T @ signal)
    energy = float(part @ part)
    if energy <= 0:
        raise DegenerateScale("signal has no component outside the null model")
    crit = f_dist.isf(level, df1, df2)

    def pw(sigma):
        return ncf.sf(crit, df1, df2, energy / sigma**2)

    lo, hi = 1e-8, 1.0
    while pw(hi) > power:
        hi *= 2
    while pw(lo) < power:
        lo /= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pm = pw(mid)
        if abs(pm - power) <= tol:
            return mid
        if pm > power:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
