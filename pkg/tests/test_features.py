import numpy as np
import pytest

from rptests.exceptions import DimensionMismatch
from rptests.features import QuadraticExpansion, is_binary, quadratic_terms


def test_binary_detection():
    assert is_binary(np.array([1.0, 2.0, 1.0]))
    assert not is_binary(np.array([0.0, 1.0, 2.0]))


def test_quadratic_terms_skip_binary_squares(rng):
    X = np.column_stack([rng.standard_normal(20), rng.integers(0, 2, 20), rng.standard_normal(20)])
    Q, pairs = quadratic_terms(X)
    assert (1, 1) not in pairs and (0, 0) in pairs and (2, 2) in pairs
    assert len(pairs) == 3 + 2
    j = pairs.index((0, 2))
    np.testing.assert_allclose(Q[:, j], X[:, 0] * X[:, 2])


def test_expansion_is_orthogonal_to_main_effects(rng):
    X = rng.standard_normal((50, 4)) + 2.0
    T = QuadraticExpansion().fit_transform(X)
    base = np.column_stack([np.ones(50), X])
    np.testing.assert_allclose(base.T @ T, 0.0, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(T, axis=0), np.sqrt(50))
    assert T.shape == (50, 6 + 4)


def test_feature_names(rng):
    X = rng.standard_normal((10, 2))
    names = QuadraticExpansion().fit(X).get_feature_names_out(["a", "b"])
    assert list(names) == ["a*b", "a^2", "b^2"]
    with pytest.raises(DimensionMismatch):
        QuadraticExpansion().fit(X).transform(np.ones((10, 3)))
