import numpy as np
import pytest

from rptests import sqrt_lasso as sl
from rptests.exceptions import DegenerateResidual, InvalidParam
from rptests.rp_methods import (
    ForestOob,
    HeteroCurve,
    LassoCurve,
    OlsRss,
    equicorrelation_set,
    hetero_target,
    lasso_rss_curve,
    ols_rss_rp,
    residualize_group,
)
from rptests.tree_ensemble import ForestConfig

from _oracles import residual_projection


def _unit_rows(rng, m, n):
    R = rng.standard_normal((m, n))
    return R / np.linalg.norm(R, axis=1, keepdims=True)


def test_ols_rss_matches_projection(rng):
    X = rng.standard_normal((30, 5))
    R = _unit_rows(rng, 4, 30)
    expect = [np.sum(residual_projection(X, r) ** 2) for r in R]
    np.testing.assert_allclose(ols_rss_rp(R, X, intercept=False), expect, rtol=1e-12)
    np.testing.assert_allclose(OlsRss(X, False)(R)[:, 0], expect, rtol=1e-12)


def test_lasso_curve_matches_pointwise_fits(rng):
    Z = rng.standard_normal((40, 12))
    Z *= np.sqrt(40) / np.linalg.norm(Z, axis=0)
    r = _unit_rows(rng, 1, 40)[0]
    grid = sl.lambda_grid(Z, r, 8, 0.1)
    curve = lasso_rss_curve(r, Z, grid)
    for l, lam in enumerate(grid):
        assert curve[l] == pytest.approx(np.sum(sl.fit(Z, r, lam).residual ** 2), abs=1e-8)
    assert curve[0] == pytest.approx(1.0)
    assert np.all(np.diff(curve) <= 1e-12)


def test_lasso_curve_common_grid(rng):
    Z = rng.standard_normal((30, 50))
    R = _unit_rows(rng, 5, 30)
    lc = LassoCurve(Z, n_lambdas=20, min_ratio=1e-3)
    grid = lc.grid_for(R)
    lmax = max(sl.lambda_max(Z, r) for r in R)
    assert grid[0] == pytest.approx(lmax)
    assert grid[-1] == pytest.approx(1e-3 * lmax)
    C = lc(R)
    assert C.shape == (5, 20)
    np.testing.assert_allclose(C[2], lasso_rss_curve(R[2], Z, grid))


def test_residualize_group(rng):
    X_rest = rng.standard_normal((50, 20))
    X_rest *= np.sqrt(50) / np.linalg.norm(X_rest, axis=0)
    X_G = X_rest[:, :2] + 0.5 * rng.standard_normal((50, 2))
    W = residualize_group(X_G, X_rest)
    gamma = sl.default_lambda(50, 20)
    np.testing.assert_allclose(W[:, 1], sl.fit(X_rest, X_G[:, 1], gamma).residual)
    with pytest.raises(DegenerateResidual):
        residualize_group(np.zeros((50, 1)), X_rest)
    with pytest.raises(InvalidParam):
        residualize_group(X_G, X_rest, gamma=0.0)


def test_equicorrelation_set_is_active_set(small_problem):
    D, y, _ = small_problem
    lam = sl.default_lambda(*D.shape)
    fit = sl.fit(D, y - y.mean(), lam)
    eq = equicorrelation_set(D, fit.residual, tol=1e-6)
    assert set(fit.active_set) <= set(eq)


def test_hetero_target():
    a = hetero_target(np.array([1.0, -3.0, 2.0, 0.0]))
    assert abs(a.sum()) < 1e-12 and np.linalg.norm(a) == pytest.approx(1.0)
    assert hetero_target(np.array([1.0, -1.0, 1.0, -1.0])) is None


def test_hetero_curve_shapes(small_problem, rng):
    D, y, _ = small_problem
    R = _unit_rows(rng, 3, D.n)
    C = HeteroCurve(D.values, n_lambdas=15)(R)
    assert C.shape == (3, 15)
    assert np.all((C >= 0) & (C <= 1 + 1e-12))


def test_forest_oob_rows_are_seeded(rng):
    X = rng.standard_normal((60, 4))
    R = _unit_rows(rng, 3, 60)
    cfg = ForestConfig(n_trees=30)
    f = ForestOob(X, cfg, seed=5, equicorrelation=False)
    a = f(R)
    np.testing.assert_array_equal(a, f(R))
    assert a.shape == (3, 1) and np.all(a > 0)
    # row i depends only on its own data and index
    np.testing.assert_array_equal(f(R[:2]), a[:2])


def test_ols_rss_extremes(rng):
    X = rng.standard_normal((12, 3))
    r = residual_projection(X, rng.standard_normal(12))
    assert ols_rss_rp(r / np.linalg.norm(r), X, intercept=False) == pytest.approx(1.0)
    v = X @ [1.0, 2.0, 0.5]
    assert ols_rss_rp(v / np.linalg.norm(v), X, intercept=False) == pytest.approx(0.0, abs=1e-14)


def test_ols_rss_reconstructs_partial_f(rng):
    from rptests.residuals import ols_scaled_residuals

    n, p, q = 30, 3, 2
    X = rng.standard_normal((n, p))
    X_all = np.column_stack([X, rng.standard_normal((n, q))])
    y = X @ [1.0, -1.0, 0.5] + rng.standard_normal(n)
    out = ols_rss_rp(ols_scaled_residuals(X, y, intercept=False), X_all, intercept=False)
    rss0 = np.sum(residual_projection(X, y) ** 2)
    rss1 = np.sum(residual_projection(X_all, y) ** 2)
    F = ((rss0 - rss1) / q) / (rss1 / (n - p - q))
    assert (1 / out - 1) * (n - p - q) / q == pytest.approx(F, rel=1e-10)
    assert out == pytest.approx(rss1 / rss0, rel=1e-12)


def test_lasso_curve_orthogonal_design_is_flat(rng):
    r = np.zeros(20)
    r[:10] = rng.standard_normal(10)
    r /= np.linalg.norm(r)
    Z = np.zeros((20, 3))
    Z[10:] = rng.standard_normal((10, 3))
    np.testing.assert_allclose(lasso_rss_curve(r, Z, [0.5, 0.1, 0.01]), 1.0)


def test_lasso_rss_decomposition(rng):
    # for the sqrt-Lasso fit b with residual e = r - Zb and ||r|| = 1:
    # ||e||^2 = 1 - ||Zb||^2 - 2 lam sqrt(n) ||e|| ||b||_1
    n = 40
    Z = rng.standard_normal((n, 10))
    Z *= np.sqrt(n) / np.linalg.norm(Z, axis=0)
    r = _unit_rows(rng, 1, n)[0] + 0.2 * Z[:, 0] / np.sqrt(n)
    r /= np.linalg.norm(r)
    for lam in sl.lambda_grid(Z, r, 6, 0.05)[1:]:
        b = sl.fit(Z, r, lam, tol=1e-12).beta_hat
        e = r - Z @ b
        rhs = 1 - np.sum((Z @ b) ** 2) - 2 * lam * np.sqrt(n) * np.linalg.norm(e) * np.abs(b).sum()
        assert lasso_rss_curve(r, Z, [lam]) == pytest.approx(rhs, abs=1e-8)


def test_residualize_group_limits(rng):
    n = 40
    X_rest = rng.standard_normal((n, 5))
    X_rest *= np.sqrt(n) / np.linalg.norm(X_rest, axis=0)
    g = residual_projection(X_rest, rng.standard_normal(n))[:, None]
    np.testing.assert_allclose(residualize_group(g, X_rest, gamma=0.5), g)
    with pytest.raises(DegenerateResidual):
        residualize_group(X_rest[:, [2]], X_rest, gamma=1e-3)
    G = rng.standard_normal((n, 2))
    W = residualize_group(G, X_rest, gamma=1e-9)
    expect = np.column_stack([residual_projection(X_rest, G[:, k]) for k in range(2)])
    np.testing.assert_allclose(W, expect, atol=1e-6)


def test_equicorrelation_examples(rng):
    n = 10
    R = _unit_rows(rng, 1, n)[0]
    other = rng.standard_normal((n, 3))
    other -= np.outer(R, R @ other)
    X = np.column_stack([other[:, :2], np.sqrt(n) * R, other[:, 2]])
    np.testing.assert_array_equal(equicorrelation_set(X, R), [2])
    X2 = np.column_stack([X, X[:, 2]])
    np.testing.assert_array_equal(equicorrelation_set(X2, R), [2, 4])


def test_hetero_constant_gives_zero_curve(rng):
    from rptests.rp_methods import hetero_rp

    R = np.array([1.0, -1.0, 1.0, -1.0]) / 2
    np.testing.assert_array_equal(hetero_rp(R, rng.standard_normal((4, 2)), [0.5, 0.1]), 0.0)


def test_hetero_rp_detects_variance_signal():
    from rptests.rp_methods import hetero_rp

    # a variance 1 + 2|x| is even in x, so it is regressed on |x|; the linear
    # profile below is the form used in the simulation study
    n, grid = 300, np.geomspace(0.5, 0.01, 10)
    wins = np.zeros(2, dtype=int)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n)
        x *= np.sqrt(n) / np.linalg.norm(x)
        z = rng.standard_normal(n)
        v = x - x.min() + 0.01
        for k, (var, pred) in enumerate([(1 + 2 * np.abs(x), np.abs(x)), (v / v.mean(), x)]):
            het = z * np.sqrt(var)
            a = hetero_rp(het / np.linalg.norm(het), pred[:, None], grid)
            b = hetero_rp(z / np.linalg.norm(z), pred[:, None], grid)
            assert np.all(np.diff(a) <= 1e-12)
            wins[k] += a[-1] < b[-1]
    assert np.all(wins >= 90)


def test_forest_rp_noise_and_signal():
    from rptests.rp_methods import forest_rp

    n = 100
    cfg = ForestConfig(n_trees=100)
    ratios, step = [], []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, 2))
        r = rng.standard_normal(n)
        r /= np.linalg.norm(r)
        ratios.append(forest_rp(r, X, cfg, seed) / r.var())
        s = np.sign(X[:, 0])
        s = (s - s.mean()) / np.linalg.norm(s - s.mean())
        step.append(forest_rp(s, X, cfg, seed) / r.var())
    assert 0.7 < np.mean(ratios) < 1.3
    assert np.median(step) < 0.5 * np.median(ratios)
    assert forest_rp(r, X, cfg, 4) == forest_rp(r, X, cfg, 4)
