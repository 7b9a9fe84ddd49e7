import numpy as np
import pytest
from sklearn.tree import DecisionTreeRegressor

from rptests.exceptions import DimensionMismatch, InvalidParam, NoOobSamples
from rptests.tree_ensemble import ForestConfig, OobForestRegressor, fit_forest, oob_error, predict


@pytest.mark.parametrize("leaf", [2, 3, 7])
def test_single_full_tree_matches_cart(rng, leaf):
    X = rng.standard_normal((80, 3))
    y = np.sin(2 * X[:, 0]) + X[:, 1] ** 2 + 0.1 * rng.standard_normal(80)
    cfg = ForestConfig(n_trees=1, mtry=3, min_node_size=leaf, bootstrap=False)
    model = fit_forest(X, y, cfg)
    ref = DecisionTreeRegressor(min_samples_leaf=leaf, random_state=0).fit(X, y)
    X_new = rng.standard_normal((200, 3))
    np.testing.assert_allclose(predict(model, X_new), ref.predict(X_new), atol=1e-12)


def test_unit_leaves_interpolate(rng):
    # two-point nodes split equally well on every feature, so only the fit is compared
    X = rng.standard_normal((60, 3))
    y = rng.standard_normal(60)
    model = fit_forest(X, y, ForestConfig(n_trees=1, mtry=3, min_node_size=1, bootstrap=False))
    np.testing.assert_allclose(predict(model, X), y, atol=1e-12)


def test_leaves_respect_min_size(rng):
    X = rng.standard_normal((50, 2))
    y = rng.standard_normal(50)
    model = fit_forest(X, y, ForestConfig(n_trees=1, mtry=2, min_node_size=6, bootstrap=False))
    leaf_ids = []
    for x in X:
        k = 0
        while model.feature[0, k] >= 0:
            f = model.feature[0, k]
            k = model.left[0, k] if x[f] <= model.threshold[0, k] else model.right[0, k]
        leaf_ids.append(k)
    _, counts = np.unique(leaf_ids, return_counts=True)
    assert counts.min() >= 6


def test_oob_bookkeeping(rng):
    X = rng.standard_normal((40, 3))
    y = X[:, 0] + rng.standard_normal(40)
    model = fit_forest(X, y, ForestConfig(n_trees=50, seed=2))
    # each row is out of bag for about e^-1 of the trees
    assert 0.2 < model.oob_count.mean() / 50 < 0.55
    ok = model.oob_count > 0
    assert oob_error(model) == pytest.approx(np.mean((y[ok] - model.oob_prediction[ok]) ** 2))


def test_noise_oob_error_near_variance(rng):
    X = rng.standard_normal((100, 5))
    y = rng.standard_normal(100)
    ratio = fit_forest(X, y, ForestConfig(n_trees=300, seed=1)).oob_mse / y.var()
    assert 0.95 < ratio < 1.4


def test_signal_lowers_oob_error(rng):
    X = rng.standard_normal((150, 3))
    y = 3 * np.sign(X[:, 0]) + 0.3 * rng.standard_normal(150)
    assert fit_forest(X, y, ForestConfig(n_trees=200)).oob_mse < 0.2 * y.var()


def test_seed_determinism(rng):
    X = rng.standard_normal((30, 4))
    y = rng.standard_normal(30)
    a = fit_forest(X, y, ForestConfig(n_trees=20, seed=9))
    b = fit_forest(X, y, ForestConfig(n_trees=20, seed=9))
    c = fit_forest(X, y, ForestConfig(n_trees=20, seed=10))
    assert a.oob_mse == b.oob_mse != c.oob_mse
    # tree t depends only on (seed, t)
    d = fit_forest(X, y, ForestConfig(n_trees=5, seed=9))
    np.testing.assert_array_equal(d.feature, a.feature[:5])


def test_forest_errors(rng):
    X = rng.standard_normal((20, 2))
    y = rng.standard_normal(20)
    with pytest.raises(NoOobSamples):
        oob_error(fit_forest(X, y, ForestConfig(n_trees=3, bootstrap=False)))
    with pytest.raises(InvalidParam):
        fit_forest(X, y, ForestConfig(mtry=3))
    with pytest.raises(InvalidParam):
        ForestConfig(n_trees=0)
    with pytest.raises(DimensionMismatch):
        predict(fit_forest(X, y, ForestConfig(n_trees=2)), np.ones((3, 5)))


def test_estimator_wrapper(rng):
    X = rng.standard_normal((40, 3))
    y = X[:, 1] + 0.1 * rng.standard_normal(40)
    est = OobForestRegressor(n_trees=40, random_state=3).fit(X, y)
    assert est.oob_score_ == est.model_.oob_mse
    assert est.predict(X).shape == (40,)
    assert est.get_params()["n_trees"] == 40


def test_constant_response(rng):
    X = rng.standard_normal((30, 3))
    model = fit_forest(X, np.full(30, 2.5), ForestConfig(n_trees=20))
    np.testing.assert_array_equal(predict(model, rng.standard_normal((10, 3))), 2.5)
    assert oob_error(model) == 0.0


def test_step_function_is_learned():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = np.column_stack([rng.choice([-1.0, 1.0], 50), rng.standard_normal(50)])
        y = (X[:, 0] > 0).astype(float)
        assert fit_forest(X, y, ForestConfig(n_trees=100, seed=seed)).oob_mse < 0.05


def test_single_leaf_predicts_mean(rng):
    # constant features leave no valid split
    X = np.ones((12, 2))
    y = rng.standard_normal(12)
    model = fit_forest(X, y, ForestConfig(n_trees=1, mtry=2, min_node_size=2, bootstrap=False))
    np.testing.assert_allclose(predict(model, rng.standard_normal((5, 2))), y.mean())


def test_predictions_within_response_range(rng):
    X = rng.standard_normal((60, 4))
    y = rng.exponential(size=60)
    model = fit_forest(X, y, ForestConfig(n_trees=30, min_node_size=2))
    pred = predict(model, 5 * rng.standard_normal((200, 4)))
    assert pred.min() >= y.min() and pred.max() <= y.max()
    assert oob_error(model) >= 0


def test_noise_ratio_at_n200():
    ratios = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((200, 5))
        y = rng.standard_normal(200)
        ratios.append(fit_forest(X, y, ForestConfig(n_trees=100, seed=seed)).oob_mse / y.var())
    ratios = np.array(ratios)
    assert np.all((ratios >= 0.9) & (ratios <= 1.3))

