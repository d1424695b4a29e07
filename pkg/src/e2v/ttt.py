"""Self-attention test-time training for sparse property imputation.

All elements form one input sequence, known-value and unknown alike.  A
single-head attention layer mixes the sequence, a shared linear head reads
a scalar off every position, and training minimizes squared error on the
known positions only.  Unknown elements still shape the attention context,
so finishing training directly yields their imputed values.  No positional
encoding is added.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import atomic_number_of
from .errors import E2vError, NumericalError
from .models import rmse


@dataclass(frozen=True)
class TttConfig:
    input_dim: int
    model_dim: int = 64
    heads: int = 1
    steps: int = 2000
    step_size: float = 1e-3
    seed: int = 0
    target_standardize: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.model_dim < 2:
            raise E2vError(f"model_dim must be >= 2, got {self.model_dim}")
        if self.steps < 1:
            raise E2vError(f"steps must be >= 1, got {self.steps}")
        if self.heads != 1:
            raise E2vError("only single-head attention is supported")


@dataclass
class AttentionParams:
    wq: np.ndarray  # (D, d_m)
    wk: np.ndarray  # (D, d_m)
    wv: np.ndarray  # (D, d_m)
    w: np.ndarray  # (d_m,)
    b: float

    def blocks(self) -> tuple:
        return (self.wq, self.wk, self.wv, self.w, self.b)

    @staticmethod
    def from_blocks(blocks: tuple) -> "AttentionParams":
        return AttentionParams(*blocks)


def init_params(input_dim: int, model_dim: int, seed: int) -> AttentionParams:
    """Scaled-normal projections (1/sqrt(D)), zero head weights and bias."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(input_dim)
    return AttentionParams(
        wq=rng.normal(0.0, scale, size=(input_dim, model_dim)),
        wk=rng.normal(0.0, scale, size=(input_dim, model_dim)),
        wv=rng.normal(0.0, scale, size=(input_dim, model_dim)),
        w=np.zeros(model_dim),
        b=0.0,
    )


def attention_forward(X: np.ndarray, params: AttentionParams) -> tuple[np.ndarray, dict]:
    """One attention layer plus a shared linear readout.

    Rows of the attention matrix are softmax-normalized scores
    Q K^T / sqrt(d_m); the cache holds every intermediate needed for exact
    backpropagation.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise E2vError(f"attention input must be (n>=2, D), got {X.shape}")
    d_m = params.wq.shape[1]
    q = X @ params.wq
    k = X @ params.wk
    v = X @ params.wv
    scores = (q @ k.T) / np.sqrt(d_m)
    scores -= scores.max(axis=1, keepdims=True)
    expd = np.exp(scores)
    attn = expd / expd.sum(axis=1, keepdims=True)
    mixed = attn @ v
    yhat = mixed @ params.w + params.b
    if not np.all(np.isfinite(yhat)):
        raise NumericalError("non-finite attention activations")
    cache = {"X": X, "q": q, "k": k, "v": v, "attn": attn, "mixed": mixed, "params": params}
    return yhat, cache


def attention_backward(cache: dict, d_yhat: np.ndarray, mask: np.ndarray) -> AttentionParams:
    """Exact parameter gradients given the loss gradient on supervised outputs.

    ``d_yhat`` must be zero outside the supervised mask; masked-out
    positions contribute no loss but still mix into every attention row.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise E2vError("supervised mask is empty")
    X = cache["X"]
    params: AttentionParams = cache["params"]
    attn, v, mixed = cache["attn"], cache["v"], cache["mixed"]
    q, k = cache["q"], cache["k"]
    d_m = params.wq.shape[1]

    d_yhat = np.asarray(d_yhat, dtype=np.float64)
    g_b = float(np.sum(d_yhat))
    g_w = mixed.T @ d_yhat
    d_mixed = np.outer(d_yhat, params.w)
    d_v = attn.T @ d_mixed
    d_attn = d_mixed @ v.T
    # Row-wise softmax backward: dS_i = A_i * (dA_i - <dA_i, A_i>).
    row_dot = np.sum(d_attn * attn, axis=1, keepdims=True)
    d_scores = attn * (d_attn - row_dot)
    d_q = (d_scores @ k) / np.sqrt(d_m)
    d_k = (d_scores.T @ q) / np.sqrt(d_m)
    return AttentionParams(
        wq=X.T @ d_q,
        wk=X.T @ d_k,
        wv=X.T @ d_v,
        w=g_w,
        b=g_b,
    )


def supervised_loss_and_grads(
    X: np.ndarray, y: np.ndarray, mask: np.ndarray, params: AttentionParams
) -> tuple[float, AttentionParams, np.ndarray]:
    """Mean squared error over the supervised positions, with exact gradients."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise E2vError("supervised mask is empty")
    yhat, cache = attention_forward(X, params)
    m = int(mask.sum())
    resid = np.where(mask, yhat - y, 0.0)
    loss = float(np.sum(resid**2) / m)
    d_yhat = 2.0 * resid / m
    grads = attention_backward(cache, d_yhat, mask)
    return loss, grads, yhat


@dataclass
class TttResult:
    predictions: dict[str, float]
    loss_trace: list[float]
    final_train_rmse: float
    early_stop_step: int | None = None
    config: TttConfig | None = None


def _ordered_symbols(embeddings: dict[str, np.ndarray], order) -> list[str]:
    if order is not None:
        missing = set(embeddings) - set(order)
        if missing:
            raise E2vError(f"order is missing symbols {sorted(missing)}")
        return [s for s in order if s in embeddings]
    return sorted(embeddings, key=atomic_number_of)


def ttt_impute(
    embeddings: dict[str, np.ndarray],
    known_values: dict[str, float],
    config: TttConfig,
    order: list[str] | None = None,
) -> TttResult:
    """Train on the full sequence with supervision only at known positions.

    The sequence is every element in ascending atomic-number order (or the
    caller's explicit order for non-element symbols).  Targets are z-scored
    over the known values when configured, with a zero-variance guard, and
    predictions come from the final parameters, inverse-transformed.  A
    training loss whose 50-step window mean stops decreasing for 10
    consecutive windows ends the run early; that is recorded, not an error.
    """
    if len(known_values) < 2:
        raise E2vError(f"need at least 2 known values, got {len(known_values)}")
    unknown_to_sequence = set(known_values) - set(embeddings)
    if unknown_to_sequence:
        raise E2vError(f"known values without embeddings: {sorted(unknown_to_sequence)}")
    symbols = _ordered_symbols(embeddings, order)
    X = np.stack([np.asarray(embeddings[s], dtype=np.float64) for s in symbols])
    if X.shape[1] != config.input_dim:
        raise E2vError(f"embeddings have dim {X.shape[1]}, config says {config.input_dim}")
    mask = np.array([s in known_values for s in symbols])
    targets = np.array([known_values.get(s, 0.0) for s in symbols], dtype=np.float64)

    if config.target_standardize:
        known = targets[mask]
        t_mean = float(known.mean())
        t_std = float(known.std())
        if t_std == 0.0:
            t_std = 1.0
    else:
        t_mean, t_std = 0.0, 1.0
    z = (targets - t_mean) / t_std

    params = init_params(config.input_dim, config.model_dim, config.seed)
    blocks = list(params.blocks())
    m_state = [np.zeros_like(p) if isinstance(p, np.ndarray) else 0.0 for p in blocks]
    v_state = [np.zeros_like(p) if isinstance(p, np.ndarray) else 0.0 for p in blocks]

    loss_trace: list[float] = []
    early_stop_step: int | None = None
    window = 50
    prev_window_mean = np.inf
    stale_windows = 0
    for step in range(1, config.steps + 1):
        loss, grads, _ = supervised_loss_and_grads(X, z, mask, AttentionParams(*blocks))
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite training loss at step {step}")
        loss_trace.append(loss)
        for i, grad in enumerate(grads.blocks()):
            m_state[i] = config.beta1 * m_state[i] + (1 - config.beta1) * grad
            v_state[i] = config.beta2 * v_state[i] + (1 - config.beta2) * np.square(grad)
            m_hat = m_state[i] / (1 - config.beta1**step)
            v_hat = v_state[i] / (1 - config.beta2**step)
            blocks[i] = blocks[i] - config.step_size * m_hat / (np.sqrt(v_hat) + config.eps)
        if step % window == 0:
            window_mean = float(np.mean(loss_trace[-window:]))
            if window_mean >= prev_window_mean:
                stale_windows += 1
                if stale_windows >= 10:
                    early_stop_step = step
                    break
            else:
                stale_windows = 0
            prev_window_mean = window_mean

    yhat, _ = attention_forward(X, AttentionParams(*blocks))
    predictions = {s: float(yhat[i] * t_std + t_mean) for i, s in enumerate(symbols)}
    train_pred = np.array([predictions[s] for s in symbols])[mask]
    train_true = targets[mask]
    return TttResult(
        predictions=predictions,
        loss_trace=loss_trace,
        final_train_rmse=rmse(train_true, train_pred),
        early_stop_step=early_stop_step,
        config=config,
    )
