import numpy as np
import pytest

from rptests import sqrt_lasso as sl
from rptests.core import ErrorSource, standardize
from rptests.exceptions import DegenerateResidual, RankDeficient
from rptests.residuals import (
    lasso_scaled_residuals,
    null_errors,
    ols_basis,
    ols_scaled_residuals,
    simulate_lasso_null,
    simulate_ols_null,
)

from _oracles import residual_projection


def test_ols_residuals_match_projection(rng):
    X = rng.standard_normal((30, 4))
    y = rng.standard_normal(30)
    r = residual_projection(X, y)
    np.testing.assert_allclose(ols_scaled_residuals(X, y, intercept=False), r / np.linalg.norm(r), atol=1e-12)


def test_centered_design_adds_intercept(rng):
    D = standardize(rng.standard_normal((25, 3)))
    y = rng.standard_normal(25) + 10
    R = ols_scaled_residuals(D, y)
    assert abs(R.sum()) < 1e-10
    assert ols_basis(D).shape == (25, 4)


def test_ols_basis_errors(rng):
    with pytest.raises(RankDeficient):
        ols_basis(rng.standard_normal((5, 5)), intercept=False)
    X = rng.standard_normal((10, 2))
    with pytest.raises(RankDeficient):
        ols_basis(np.column_stack([X, X[:, 0]]), intercept=False)


def test_ols_residual_of_fitted_response_is_degenerate(rng):
    X = rng.standard_normal((10, 2))
    with pytest.raises(DegenerateResidual):
        ols_scaled_residuals(X, X @ [1.0, 2.0], intercept=False)


def test_null_errors_rows_are_replicates():
    src = ErrorSource("gaussian", 11)
    E = null_errors(src, 8, 5)
    np.testing.assert_array_equal(null_errors(src, 8, 3), E[:3])


def test_resampled_errors_are_rescaled():
    pool = np.array([0.5, -0.5, 0.5, -0.5])
    E = null_errors(ErrorSource("resample", 0, pool), 4, 10)
    np.testing.assert_allclose(np.abs(E), 1.0)


def test_simulated_ols_null_is_unit_and_orthogonal(rng):
    X = rng.standard_normal((20, 3))
    S = simulate_ols_null(X, 6, ErrorSource("gaussian", 2), intercept=False)
    np.testing.assert_allclose(np.linalg.norm(S, axis=1), 1.0)
    np.testing.assert_allclose(S @ X, 0.0, atol=1e-12)


def test_lasso_scaled_residual(small_problem):
    D, y, _ = small_problem
    lam = sl.default_lambda(*D.shape)
    R = lasso_scaled_residuals(D, y, lam)
    fit = sl.fit(D, y - y.mean(), lam)
    np.testing.assert_allclose(R, fit.residual / np.linalg.norm(fit.residual), atol=1e-12)


def test_lasso_null_is_worker_invariant(small_problem):
    D, y, beta = small_problem
    lam = sl.default_lambda(*D.shape)
    src = ErrorSource("gaussian", 4)
    a = simulate_lasso_null(beta, 1.0, D, lam, 7, src, n_jobs=1)
    b = simulate_lasso_null(beta, 1.0, D, lam, 7, src, n_jobs=3)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (7, D.n)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0)


def test_lasso_null_rows_follow_error_draws(small_problem):
    D, y, beta = small_problem
    lam = sl.default_lambda(*D.shape)
    src = ErrorSource("gaussian", 4)
    S = simulate_lasso_null(beta, 0.8, D, lam, 3, src)
    e = null_errors(src, D.n, 3)[2]
    np.testing.assert_allclose(S[2], lasso_scaled_residuals(D, D.values @ beta + 0.8 * e, lam), atol=1e-12)


def test_basis_vector_example():
    X = np.array([[1.0], [0.0], [0.0]])
    R = ols_scaled_residuals(X, np.array([5.0, 1.0, 1.0]), intercept=False)
    np.testing.assert_allclose(R, [0, 1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-15)


def test_ols_residuals_orthogonal_and_ancillary(rng):
    X = rng.standard_normal((10, 3))
    y = rng.standard_normal(10)
    R = ols_scaled_residuals(X, y, intercept=False)
    assert np.abs(X.T @ R).max() <= 1e-10
    v = rng.standard_normal(3)
    np.testing.assert_allclose(ols_scaled_residuals(X, 4.2 * y + X @ v, intercept=False), R, atol=1e-12)


def test_ols_ancillarity_distribution(rng):
    from scipy.stats import ks_2samp

    n, B = 15, 2000
    X = rng.standard_normal((n, 4))
    src = ErrorSource("gaussian", 8)
    a = simulate_ols_null(X, B, src, intercept=False)[:, 0]
    E = null_errors(ErrorSource("gaussian", 9), n, B)
    b = np.array([ols_scaled_residuals(X, X @ np.full(4, 5.0) + 3 * e, intercept=False)[0] for e in E])
    assert ks_2samp(a, b).statistic < 0.08


def test_zero_replicates(rng):
    assert simulate_ols_null(rng.standard_normal((8, 2)), 0, ErrorSource(), intercept=False).shape == (0, 8)


def test_lasso_residual_limits(rng):
    X = rng.standard_normal((30, 5))
    X *= np.sqrt(30) / np.linalg.norm(X, axis=0)
    y = X @ [1.0, 0, 0, -1.0, 0] + rng.standard_normal(30)
    lmax = sl.lambda_max(X, y)
    np.testing.assert_allclose(lasso_scaled_residuals(X, y, lmax, intercept=False), y / np.linalg.norm(y))
    near_ols = lasso_scaled_residuals(X, y, 1e-8 * lmax, intercept=False, tol=1e-12)
    np.testing.assert_allclose(near_ols, ols_scaled_residuals(X, y, intercept=False), atol=1e-6)
    lam = 0.3 * lmax
    R = lasso_scaled_residuals(X, y, lam, intercept=False)
    assert np.abs(X.T @ R).max() / np.sqrt(30) <= lam * (1 + 1e-6)
    np.testing.assert_allclose(lasso_scaled_residuals(X, 7.5 * y, lam, intercept=False), R, atol=1e-9)


def test_lasso_null_above_threshold_returns_errors(rng):
    n, B = 20, 5
    X = rng.standard_normal((n, 4))
    X *= np.sqrt(n) / np.linalg.norm(X, axis=0)
    src = ErrorSource("gaussian", 3)
    E = null_errors(src, n, B)
    lam = max(sl.lambda_max(X, e) for e in E)
    S = simulate_lasso_null(np.zeros(4), 1.0, X, lam, B, src, intercept=False)
    np.testing.assert_allclose(S, E / np.linalg.norm(E, axis=1, keepdims=True), atol=1e-12)
