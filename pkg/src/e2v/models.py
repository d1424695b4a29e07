"""Baseline predictors with in-repo numerics.

Ordinary least squares (minimum-norm via SVD), standardized-coefficient
feature ranking, a single-hidden-layer rectifier MLP trained with Adam and
early stopping, and a 10-way softmax classifier trained by full-batch
gradient descent.  Everything runs in 64-bit arithmetic and is
deterministic given its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import E2vError, NumericalError

N_FAMILY_CLASSES = 10


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    fitted_on: str | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.intercept


def fit_linear(X: np.ndarray, y: np.ndarray, fitted_on: str | None = None) -> LinearModel:
    """Minimum-norm least squares via SVD; intercept fitted by centering.

    Singular values below 1e-10 times the largest are treated as zero, which
    keeps the fit well-defined in the usual n < d regime here.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise E2vError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if X.shape[0] < 2:
        raise E2vError(f"need at least 2 rows, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericalError("non-finite values in regression inputs")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    weights, *_ = np.linalg.lstsq(X - x_mean, y - y_mean, rcond=1e-10)
    return LinearModel(
        weights=weights, intercept=y_mean - float(x_mean @ weights), fitted_on=fitted_on
    )


@dataclass(frozen=True)
class FeatureRanking:
    property_name: str
    order: tuple[int, ...]
    scores: np.ndarray
    fitted_on: str | None = None

    def top(self, k: int) -> tuple[int, ...]:
        if k > len(self.order):
            raise E2vError(f"k={k} exceeds dimension {len(self.order)}")
        return self.order[:k]


def rank_features(model: LinearModel, property_name: str = "") -> FeatureRanking:
    """Rank dimensions by absolute coefficient, ties broken by lower index.

    Meaningful only when the model was fitted on standardized inputs.
    """
    scores = np.abs(model.weights)
    order = tuple(int(i) for i in np.argsort(-scores, kind="stable"))
    return FeatureRanking(
        property_name=property_name, order=order, scores=scores, fitted_on=model.fitted_on
    )


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.shape[0] < 1:
        raise E2vError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


@dataclass(frozen=True)
class MlpConfig:
    hidden: int = 100
    alpha: float = 1e-4
    max_epochs: int = 500
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.1
    patience: int = 10
    seed: int = 0


@dataclass
class MlpModel:
    config: MlpConfig
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    loss_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    note: str = ""

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        hidden = np.maximum(X @ self.w1 + self.b1, 0.0)
        return hidden @ self.w2 + self.b2


def _mlp_init(dim: int, hidden: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    rng = np.random.default_rng(seed)
    bound1 = np.sqrt(6.0 / (dim + hidden))
    bound2 = np.sqrt(6.0 / (hidden + 1))
    w1 = rng.uniform(-bound1, bound1, size=(dim, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.uniform(-bound2, bound2, size=hidden)
    return w1, b1, w2, 0.0


def mlp_loss_and_grads(
    params: tuple[np.ndarray, np.ndarray, np.ndarray, float],
    X: np.ndarray,
    y: np.ndarray,
    alpha: float,
) -> tuple[float, tuple[np.ndarray, np.ndarray, np.ndarray, float]]:
    """Mean squared error plus 0.5*alpha*(|w1|^2 + |w2|^2), with exact gradients."""
    w1, b1, w2, b2 = params
    n = X.shape[0]
    pre = X @ w1 + b1
    hidden = np.maximum(pre, 0.0)
    yhat = hidden @ w2 + b2
    resid = yhat - y
    loss = float(np.mean(resid**2) + 0.5 * alpha * (np.sum(w1**2) + np.sum(w2**2)))
    d_yhat = 2.0 * resid / n
    g_w2 = hidden.T @ d_yhat + alpha * w2
    g_b2 = float(np.sum(d_yhat))
    d_hidden = np.outer(d_yhat, w2)
    d_hidden[pre <= 0.0] = 0.0
    g_w1 = X.T @ d_hidden + alpha * w1
    g_b1 = d_hidden.sum(axis=0)
    return loss, (g_w1, g_b1, g_w2, g_b2)


def fit_mlp(X: np.ndarray, y: np.ndarray, config: MlpConfig = MlpConfig()) -> MlpModel:
    """Train the [d, hidden, 1] rectifier MLP with Adam and early stopping.

    Full-batch gradients; a seeded 10% validation slice drives early
    stopping with the configured patience, and the best-validation weights
    are kept.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericalError("non-finite values in MLP inputs")
    n, dim = X.shape
    params = list(_mlp_init(dim, config.hidden, config.seed))
    if config.max_epochs == 0:
        return MlpModel(config, *params, note="no training")
    if n < 5:
        raise E2vError(f"MLP training needs at least 5 rows, got {n}")

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    n_val = max(1, int(round(config.validation_fraction * n)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    X_tr, y_tr = X[train_idx], y[train_idx]
    X_val, y_val = X[val_idx], y[val_idx]

    m = [np.zeros_like(p) if isinstance(p, np.ndarray) else 0.0 for p in params]
    v = [np.zeros_like(p) if isinstance(p, np.ndarray) else 0.0 for p in params]
    best = [np.copy(p) if isinstance(p, np.ndarray) else p for p in params]
    best_val = np.inf
    stale = 0
    loss_curve: list[float] = []
    val_curve: list[float] = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        loss, grads = mlp_loss_and_grads(tuple(params), X_tr, y_tr, config.alpha)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite MLP loss at epoch {epoch}")
        loss_curve.append(loss)
        for i, grad in enumerate(grads):
            m[i] = config.beta1 * m[i] + (1 - config.beta1) * grad
            v[i] = config.beta2 * v[i] + (1 - config.beta2) * np.square(grad)
            m_hat = m[i] / (1 - config.beta1**epoch)
            v_hat = v[i] / (1 - config.beta2**epoch)
            params[i] = params[i] - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
        model = MlpModel(config, *params)
        val_rmse = rmse(y_val, model.predict(X_val))
        val_curve.append(val_rmse)
        if val_rmse < best_val - 1e-12:
            best_val = val_rmse
            best = [np.copy(p) if isinstance(p, np.ndarray) else p for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return MlpModel(
        config, *best, loss_curve=loss_curve, val_curve=val_curve, stopped_epoch=epoch
    )


@dataclass(frozen=True)
class SoftmaxClassifier:
    weights: np.ndarray  # (d, K)
    bias: np.ndarray  # (K,)
    n_classes: int = N_FAMILY_CLASSES

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        logits = X @ self.weights + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        expd = np.exp(logits)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)


def softmax_loss_and_grads(
    weights: np.ndarray,
    bias: np.ndarray,
    X: np.ndarray,
    labels: np.ndarray,
    alpha: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus 0.5*alpha*|W|^2, with exact gradients."""
    n = X.shape[0]
    logits = X @ weights + bias
    logits -= logits.max(axis=1, keepdims=True)
    expd = np.exp(logits)
    probs = expd / expd.sum(axis=1, keepdims=True)
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(picked)) + 0.5 * alpha * np.sum(weights**2))
    grad_logits = probs.copy()
    grad_logits[np.arange(n), labels] -= 1.0
    grad_logits /= n
    g_w = X.T @ grad_logits + alpha * weights
    g_b = grad_logits.sum(axis=0)
    return loss, g_w, g_b


def fit_softmax(
    X: np.ndarray,
    labels: np.ndarray,
    n_classes: int = N_FAMILY_CLASSES,
    epochs: int = 500,
    learning_rate: float = 0.1,
    alpha: float = 1e-4,
) -> SoftmaxClassifier:
    """Multinomial logistic regression: zero init, fixed-epoch full-batch GD."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if not np.all(np.isfinite(X)):
        raise NumericalError("non-finite values in classifier inputs")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise E2vError(f"labels must lie in [0, {n_classes}), got {labels.min()}..{labels.max()}")
    weights = np.zeros((X.shape[1], n_classes))
    bias = np.zeros(n_classes)
    for _ in range(epochs):
        _, g_w, g_b = softmax_loss_and_grads(weights, bias, X, labels, alpha)
        weights = weights - learning_rate * g_w
        bias = bias - learning_rate * g_b
    return SoftmaxClassifier(weights=weights, bias=bias, n_classes=n_classes)
