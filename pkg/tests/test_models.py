import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e2v.dataset import fit_standardizer
from e2v.errors import E2vError, NumericalError
from e2v.models import (
    MlpConfig,
    fit_linear,
    fit_mlp,
    fit_softmax,
    mlp_loss_and_grads,
    rank_features,
    rmse,
    softmax_loss_and_grads,
)


def normal_equations_fit(X, y):
    """Brute-force oracle: centered normal equations via explicit inverse."""
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    w = np.linalg.solve(Xc.T @ Xc, Xc.T @ (y - y_mean))
    return w, y_mean - x_mean @ w


def test_fit_linear_exact_line():
    model = fit_linear(np.array([[1.0], [2.0]]), np.array([2.0, 4.0]))
    assert abs(model.weights[0] - 2.0) < 1e-9
    assert abs(model.intercept) < 1e-9


def test_fit_linear_constant_target():
    model = fit_linear(np.array([[1.0, 2.0], [3.0, 1.0], [0.0, 5.0]]), np.array([4.0, 4.0, 4.0]))
    assert np.all(np.abs(model.weights) < 1e-9)
    assert abs(model.intercept - 4.0) < 1e-9


def test_fit_linear_matches_normal_equations():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 8))
    y = rng.normal(size=50)
    model = fit_linear(X, y)
    w, b = normal_equations_fit(X, y)
    np.testing.assert_allclose(model.weights, w, atol=1e-8)
    assert abs(model.intercept - b) < 1e-8


def test_fit_linear_residual_orthogonality():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 6))
    y = rng.normal(size=40)
    model = fit_linear(X, y)
    resid = y - model.predict(X)
    Xc = X - X.mean(axis=0)
    assert np.all(np.abs(Xc.T @ resid) < 1e-6)


def test_fit_linear_minimum_norm_underdetermined():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(5, 20))
    y = rng.normal(size=5)
    model = fit_linear(X, y)
    np.testing.assert_allclose(model.predict(X), y, atol=1e-8)


def test_fit_linear_rejects_non_finite():
    with pytest.raises(NumericalError):
        fit_linear(np.array([[1.0], [np.inf]]), np.array([1.0, 2.0]))


def test_fit_linear_needs_two_rows():
    with pytest.raises(E2vError):
        fit_linear(np.array([[1.0]]), np.array([1.0]))


def test_rank_features_by_magnitude():
    from e2v.models import LinearModel

    model = LinearModel(weights=np.array([0.1, -0.9, 0.5]), intercept=0.0)
    assert rank_features(model).order == (1, 2, 0)


def test_rank_features_tie_break_by_index():
    from e2v.models import LinearModel

    model = LinearModel(weights=np.array([0.5, -0.5, 0.5, 0.5]), intercept=0.0)
    assert rank_features(model).order == (0, 1, 2, 3)


def test_rank_features_planted_signal():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 10))
    y = X[:, 3] - 2.0 * X[:, 7] + 0.01 * rng.normal(size=200)
    std = fit_standardizer(X, list(range(200)))
    model = fit_linear(std.apply(X), y, fitted_on=std.fitted_on)
    ranking = rank_features(model)
    assert set(ranking.top(2)) == {3, 7}
    assert ranking.fitted_on == std.fitted_on


def test_ranking_invariant_to_column_rescaling():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(100, 6))
    y = X @ np.array([1.0, -2.0, 0.5, 0.0, 3.0, -1.5]) + 0.01 * rng.normal(size=100)
    scales = np.array([1.0, 100.0, 0.01, 5.0, 0.1, 10.0])

    def ranked(Xraw):
        std = fit_standardizer(Xraw, list(range(100)))
        return rank_features(fit_linear(std.apply(Xraw), y)).order

    assert ranked(X) == ranked(X * scales)


def test_rmse_basics():
    assert rmse(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert rmse(np.array([0.0, 2.0]), np.array([1.0, 1.0])) == 1.0
    with pytest.raises(E2vError):
        rmse(np.array([1.0]), np.array([1.0, 2.0]))


@settings(max_examples=100)
@given(st.integers(min_value=1, max_value=50), st.integers(0, 1000))
def test_rmse_matches_recomputation(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(size=n)
    direct = np.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)) / n)
    assert abs(rmse(a, b) - direct) < 1e-12


def _block_relative_errors(params, loss_fn, grads, step=1e-5):
    """Central finite differences per parameter block."""
    errors = []
    for i, param in enumerate(params):
        arr = np.atleast_1d(np.asarray(param, dtype=np.float64))
        numeric = np.zeros_like(arr)
        flat = arr.ravel()
        num_flat = numeric.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = loss_fn([arr if k == i else params[k] for k in range(len(params))])
            flat[j] = orig - step
            lo = loss_fn([arr if k == i else params[k] for k in range(len(params))])
            flat[j] = orig
            num_flat[j] = (hi - lo) / (2 * step)
        analytic = np.atleast_1d(np.asarray(grads[i], dtype=np.float64))
        scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-12)
        errors.append(np.linalg.norm(numeric - analytic) / scale)
    return errors


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(12, 4))
    y = rng.normal(size=12)
    w1 = rng.normal(size=(4, 6))
    b1 = rng.normal(size=6)
    w2 = rng.normal(size=6)
    b2 = float(rng.normal())
    params = [w1, b1, w2, b2]
    _, grads = mlp_loss_and_grads((w1, b1, w2, b2), X, y, alpha=1e-4)

    def loss_fn(p):
        w1_, b1_, w2_, b2_ = p
        return mlp_loss_and_grads((w1_, b1_, np.asarray(w2_).ravel(), float(np.asarray(b2_).ravel()[0])), X, y, 1e-4)[0]

    errors = _block_relative_errors(params, loss_fn, list(grads))
    assert all(err < 1e-4 for err in errors), errors


def test_fit_mlp_learns_linear_map():
    rng = np.random.default_rng(0)
    X = 0.3 * rng.normal(size=(100, 3))
    y = 3.0 * X[:, 0]
    model = fit_mlp(X, y, MlpConfig(seed=0))
    # best-validation weights are restored, so the model's validation RMSE
    # is the minimum of the curve
    assert min(model.val_curve) < 0.1
    assert rmse(y, model.predict(X)) < 0.2


def test_fit_mlp_zero_epochs_flagged():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(10, 2))
    y = rng.normal(size=10)
    model = fit_mlp(X, y, MlpConfig(max_epochs=0))
    assert model.note == "no training"
    assert model.loss_curve == []


def test_fit_mlp_needs_five_rows():
    with pytest.raises(E2vError):
        fit_mlp(np.ones((4, 2)), np.ones(4), MlpConfig())


def test_fit_mlp_early_stopping_bounded():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(50, 2))
    y = rng.normal(size=50)  # pure noise: validation stalls quickly
    model = fit_mlp(X, y, MlpConfig(seed=1, max_epochs=500))
    assert model.stopped_epoch <= 500


def test_softmax_gradients_match_finite_differences():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(15, 5))
    labels = rng.integers(0, 10, size=15)
    W = rng.normal(size=(5, 10))
    b = rng.normal(size=10)
    _, g_w, g_b = softmax_loss_and_grads(W, b, X, labels, alpha=1e-4)

    def loss_fn(p):
        return softmax_loss_and_grads(p[0], np.asarray(p[1]).ravel(), X, labels, 1e-4)[0]

    errors = _block_relative_errors([W, b], loss_fn, [g_w, g_b])
    assert all(err < 1e-4 for err in errors), errors


def test_softmax_separable_two_clouds():
    rng = np.random.default_rng(10)
    a = rng.normal(size=(20, 2)) + np.array([6.0, 0.0])
    b = rng.normal(size=(20, 2)) - np.array([6.0, 0.0])
    X = np.vstack([a, b])
    labels = np.array([2] * 20 + [7] * 20)
    model = fit_softmax(X, labels)
    assert np.mean(model.predict(X) == labels) == 1.0


def test_softmax_zero_init_uniform():
    model = fit_softmax(np.zeros((3, 4)), np.array([0, 1, 2]), epochs=0)
    probs = model.predict_proba(np.random.default_rng(0).normal(size=(5, 4)))
    np.testing.assert_allclose(probs, 0.1, atol=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 500))
def test_softmax_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(8, 3)) * rng.uniform(0.1, 50)
    model = fit_softmax(rng.normal(size=(12, 3)), rng.integers(0, 10, size=12), epochs=20)
    probs = model.predict_proba(X)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(probs >= 0)
