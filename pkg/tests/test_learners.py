from __future__ import annotations

import numpy as np
import pytest

from wifi_distance.learners.boosting import fit_gbt
from wifi_distance.learners.knn import fit_knn
from wifi_distance.learners.linear import fit_lasso, fit_ols, fit_ridge
from wifi_distance.learners.registry import fit_model
from wifi_distance.learners.tree import LEAF, build_tree, fit_cart
from wifi_distance.selection.masks import FeatureMask


def well_conditioned(n=200, d=10, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = X @ rng.normal(size=d) + 3.0 + 0.1 * rng.normal(size=n)
    return X, y


def normal_equations(X, y):
    A = np.column_stack([X, np.ones(X.shape[0])])
    return np.linalg.solve(A.T @ A, A.T @ y)


# ----------------------------
# OLS / ridge / lasso
# ----------------------------
def test_ols_recovers_noiseless_line():
    x = np.linspace(0, 10, 20)
    model = fit_ols(x.reshape(-1, 1), 2 * x + 1)
    assert model.fitted.coef_[0] == pytest.approx(2.0, abs=1e-8)
    assert model.fitted.raw_intercept == pytest.approx(1.0, abs=1e-8)
    assert model.flags["singular_design"] is False


def test_ols_matches_normal_equations():
    X, y = well_conditioned()
    model = fit_ols(X, y)
    beta = normal_equations(X, y)
    np.testing.assert_allclose(model.fitted.coef_, beta[:-1], rtol=1e-8, atol=1e-8)
    assert model.fitted.raw_intercept == pytest.approx(beta[-1], abs=1e-8)
    np.testing.assert_allclose(model.predict(X), np.column_stack([X, np.ones(len(y))]) @ beta, atol=1e-8)


def test_ols_residuals_orthogonal_to_design():
    X, y = well_conditioned(seed=1)
    r = y - fit_ols(X, y).predict(X)
    assert np.max(np.abs(X.T @ r)) <= 1e-6 * np.linalg.norm(X) * np.linalg.norm(y)
    assert abs(r.sum()) <= 1e-6 * np.linalg.norm(y)


def test_ols_constant_target():
    X, _ = well_conditioned(n=50, d=3)
    model = fit_ols(X, np.full(50, 7.5))
    np.testing.assert_allclose(model.fitted.weights, 0.0, atol=1e-12)
    assert model.fitted.intercept == 7.5


def test_ols_rank_deficient_design_is_flagged():
    X, y = well_conditioned(n=50, d=3)
    X = np.column_stack([X, X[:, 0]])
    model = fit_ols(X, y)
    assert model.flags["singular_design"] is True
    assert np.all(np.isfinite(model.predict(X)))


def test_ols_needs_enough_rows():
    with pytest.raises(ValueError):
        fit_ols(np.ones((3, 3)), np.ones(3))


def test_ridge_zero_penalty_equals_ols():
    X, y = well_conditioned(seed=2)
    np.testing.assert_allclose(fit_ridge(X, y, 0.0).predict(X), fit_ols(X, y).predict(X), atol=1e-8)


def test_ridge_matches_closed_form_on_5x2_system():
    X = np.array([[1.0, 2.0], [2.0, 0.5], [3.0, 1.0], [4.0, 3.5], [5.0, 2.0]])
    y = np.array([1.0, 2.5, 2.0, 4.0, 6.0])
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    w = np.linalg.solve(Xc.T @ Xc + np.eye(2), Xc.T @ yc)
    model = fit_ridge(X, y, 1.0, standardize=False)
    np.testing.assert_allclose(model.fitted.coef_, w, rtol=1e-10)
    assert model.fitted.raw_intercept == pytest.approx(y.mean() - X.mean(axis=0) @ w)


def test_ridge_weights_shrink_with_penalty():
    X, y = well_conditioned(seed=3)
    norms = [np.linalg.norm(fit_ridge(X, y, lam).fitted.weights) for lam in (0.0, 0.1, 1.0, 10.0, 1e3, 1e9)]
    for a, b in zip(norms, norms[1:]):
        assert b <= a + 1e-9
    huge = fit_ridge(X, y, 1e12)
    np.testing.assert_allclose(huge.predict(X), y.mean(), atol=1e-6)
    with pytest.raises(ValueError):
        fit_ridge(X, y, -1.0)


def test_lasso_zero_alpha_is_least_squares_and_large_alpha_zeroes_weights():
    X, y = well_conditioned(n=100, d=4, seed=4)
    np.testing.assert_allclose(fit_lasso(X, y, 0.0).predict(X), fit_ols(X, y).predict(X), atol=1e-6)
    assert not np.any(fit_lasso(X, y, 1e6).fitted.weights)


def test_lasso_drops_irrelevant_columns():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 5))
    y = 4 * X[:, 0] + 0.1 * rng.normal(size=300)
    w = fit_lasso(X, y, 0.5).fitted.weights
    assert w[0] != 0.0
    assert not np.any(w[1:])


# ----------------------------
# KNN
# ----------------------------
def brute_knn(X_train, y_train, q, k):
    d = [float(np.sum((row - q) ** 2)) for row in X_train]
    order = sorted(range(len(d)), key=lambda i: (d[i], i))[:k]
    return sum(y_train[i] for i in order) / k


def test_knn_exact_on_training_rows_with_k1():
    X, y = well_conditioned(n=30, d=3)
    model = fit_knn(X, y, k=1)
    np.testing.assert_array_equal(model.predict(X), y)


def test_knn_with_k_equal_n_predicts_mean():
    X, y = well_conditioned(n=25, d=2)
    np.testing.assert_allclose(fit_knn(X, y, k=25).predict(X[:5]), y.mean())


def test_knn_matches_brute_force_scan():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0], [1.0, 1.0], [2.0, 0.5]])
    y = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    model = fit_knn(X, y, k=3)
    Z = model.fitted.X_train
    queries = np.array([[0.5, 0.5], [2.0, 2.0], [0.0, 1.0], [1.0, 0.0]])
    Q = model.fitted.scaler.transform(queries)
    expected = [brute_knn(Z, y, q, 3) for q in Q]
    np.testing.assert_allclose(model.predict(queries), expected, rtol=1e-12)


def test_knn_tie_break_prefers_lower_index():
    X = np.array([[-1.0], [1.0], [-3.0], [3.0]])
    y = np.array([10.0, 20.0, 30.0, 40.0])
    model = fit_knn(X, y, k=1)
    idx, _ = model.fitted.neighbours(np.array([[0.0]]))
    assert idx[0, 0] == 0


def test_knn_distance_weighting_exact_match():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([1.0, 2.0, 9.0])
    model = fit_knn(X, y, k=2, weighting="distance")
    assert model.predict(np.array([[1.0]]))[0] == 2.0


def test_knn_validation():
    X, y = well_conditioned(n=10, d=2)
    with pytest.raises(ValueError):
        fit_knn(X, y, k=11)
    with pytest.raises(ValueError):
        fit_knn(X, y, k=2, weighting="gaussian")


# ----------------------------
# CART
# ----------------------------
def tree_walk(tree, x):
    node = 0
    while tree.feature[node] != LEAF:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return tree.value[node]


def best_split_oracle(X, y, min_leaf=1):
    """Enumerate every (feature, midpoint) split; return the lowest child SSE with its feature and threshold."""
    best = None
    for j in range(X.shape[1]):
        values = sorted(set(X[:, j]))
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2
            left = y[X[:, j] <= thr]
            right = y[X[:, j] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            sse = float(((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum())
            if best is None or sse < best[0] - 1e-12:
                best = (sse, j, thr)
    return best


def test_cart_pure_leaves_without_depth_limit():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(60, 3))
    y = rng.normal(size=60)
    model = fit_cart(X, y)
    assert np.mean((model.predict(X) - y) ** 2) <= 1e-20


def test_cart_depth_zero_predicts_mean():
    X, y = well_conditioned(n=40, d=2)
    model = fit_cart(X, y, max_depth=0)
    np.testing.assert_allclose(model.predict(X), y.mean())
    assert model.fitted.n_nodes == 1


def test_cart_step_function_depth_one():
    x = np.array([0.1, 0.2, 0.4, 0.5, 0.6, 0.8, 0.9])
    y = (x > 0.5).astype(float)
    tree = fit_cart(x.reshape(-1, 1), y, max_depth=1).fitted
    assert tree.feature[0] == 0
    assert 0.5 <= tree.threshold[0] < 0.6
    np.testing.assert_array_equal(tree.predict(x.reshape(-1, 1)), y)


def test_cart_root_split_matches_exhaustive_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = int(rng.integers(3, 9))
        X = rng.integers(0, 5, size=(n, 3)).astype(float)
        y = rng.normal(size=n)
        expected = best_split_oracle(X, y)
        tree = build_tree(X, y, max_depth=1)
        if expected is None:
            assert tree.n_nodes == 1
            continue
        j, thr = int(tree.feature[0]), float(tree.threshold[0])
        left = y[X[:, j] <= thr]
        right = y[X[:, j] > thr]
        got = float(((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum())
        assert got == pytest.approx(expected[0], abs=1e-9)
        assert X[:, j].min() <= thr < X[:, j].max()


def test_cart_prediction_equals_tree_walk():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(200, 4))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2
    model = fit_cart(X, y, max_depth=6, min_samples_leaf=3)
    Q = rng.normal(size=(100, 4))
    expected = [tree_walk(model.fitted, q) for q in Q]
    np.testing.assert_array_equal(model.predict(Q), expected)


def test_cart_min_samples_leaf_is_respected():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(100, 2))
    y = rng.normal(size=100)
    tree = fit_cart(X, y, min_samples_leaf=10).fitted
    leaves, counts = np.unique(tree.apply(X), return_counts=True)
    assert np.all(counts >= 10)
    assert tree.importances.sum() == pytest.approx(1.0)


# ----------------------------
# Gradient boosting
# ----------------------------
def noisy_data(seed=10):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, size=(300, 3))
    y = 2 * np.sin(X[:, 0]) + X[:, 1] + rng.normal(size=300)
    return X, y


def test_gbt_training_loss_non_increasing():
    X, y = noisy_data()
    loss = fit_gbt(X, y, n_trees=50, learning_rate=0.2, depth=3).fitted.train_loss
    assert len(loss) == 51
    for a, b in zip(loss, loss[1:]):
        assert b <= a + 1e-12


def test_gbt_more_trees_fit_better():
    X, y = noisy_data(11)
    short = fit_gbt(X, y, n_trees=10, learning_rate=0.1, depth=3).fitted.train_loss[-1]
    long = fit_gbt(X, y, n_trees=100, learning_rate=0.1, depth=3).fitted.train_loss[-1]
    assert long < short


def test_gbt_single_full_step_equals_cart():
    X, y = noisy_data(12)
    gbt = fit_gbt(X, y, n_trees=1, learning_rate=1.0, depth=3)
    cart = fit_cart(X, y, max_depth=3)
    np.testing.assert_allclose(gbt.predict(X), cart.predict(X), atol=1e-9)
    assert gbt.fitted.train_loss[-1] <= np.mean((cart.predict(X) - y) ** 2) + 1e-9


def test_gbt_zero_learning_rate_predicts_mean():
    X, y = noisy_data(13)
    np.testing.assert_allclose(fit_gbt(X, y, n_trees=3, learning_rate=0.0).predict(X), y.mean())


def test_gbt_subsample_is_seeded():
    X, y = noisy_data(14)
    a = fit_gbt(X, y, n_trees=5, subsample=0.5, seed=1)
    b = fit_gbt(X, y, n_trees=5, subsample=0.5, seed=1)
    c = fit_gbt(X, y, n_trees=5, subsample=0.5, seed=2)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))
    assert not np.array_equal(a.predict(X), c.predict(X))
    assert a.stochastic and not fit_gbt(X, y, n_trees=2).stochastic


@pytest.mark.parametrize("kwargs", [{"n_trees": 0}, {"learning_rate": 1.5}, {"subsample": 0.0}])
def test_gbt_validation(kwargs):
    X, y = noisy_data()
    with pytest.raises(ValueError):
        fit_gbt(X, y, **kwargs)


# ----------------------------
# Registry
# ----------------------------
def test_fit_model_dispatch_and_validation():
    X, y = well_conditioned(n=60, d=3)
    for kind in ("ols", "ridge", "knn", "cart", "gbt"):
        model = fit_model(kind, X, y, {"n_trees": 3} if kind == "gbt" else None)
        assert model.kind == kind
        assert np.all(np.isfinite(model.predict(X)))
    with pytest.raises(ValueError):
        fit_model("svm", X, y)
    with pytest.raises(ValueError):
        fit_model("ridge", X, y, {"k": 3})


def test_seed_only_reaches_gbt():
    X, y = well_conditioned(n=60, d=3)
    assert fit_model("gbt", X, y, {"n_trees": 2}, seed=42).hyperparameters["seed"] == 42
    assert "seed" not in fit_model("ridge", X, y, seed=42).hyperparameters


def test_mask_must_match_columns():
    X, y = well_conditioned(n=60, d=3)
    with pytest.raises(ValueError):
        fit_model("ols", X, y, feature_mask=FeatureMask.from_indices([0, 1]))
    model = fit_model("ols", X, y, feature_mask=FeatureMask.from_indices([2, 5, 9]))
    with pytest.raises(ValueError):
        model.predict(np.ones((2, 4)))


@pytest.mark.parametrize("kind", ["ols", "ridge", "knn", "cart"])
def test_deterministic_learners_refit_identically(kind):
    X, y = well_conditioned(n=80, d=4, seed=15)
    assert np.array_equal(fit_model(kind, X, y).predict(X), fit_model(kind, X, y).predict(X))
