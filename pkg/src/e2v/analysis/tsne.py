"""Exact t-SNE with per-point perplexity bisection.

No tree or interpolation approximations: pairwise affinities are computed
in full, which is the right trade at n <= a few hundred points and makes
the projection reproducible bit-for-bit given a seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import E2vError

_EPS = 1e-12


@dataclass(frozen=True)
class Projection2D:
    coords: np.ndarray  # (n, 2)
    perplexity: float
    seed: int
    iterations: int
    kl_trace: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.coords)):
            raise E2vError("projection produced non-finite coordinates")


def _row_affinities(d2_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Conditional affinities for one point at precision ``beta``; returns (p, perplexity)."""
    p = np.exp(-d2_row * beta)
    total = p.sum()
    if total <= 0.0 or not np.isfinite(total):
        p = np.full_like(d2_row, 1.0 / d2_row.shape[0])
        return p, d2_row.shape[0]
    p = p / total
    h_bits = float(-np.sum(p * np.log2(np.maximum(p, _EPS))))
    return p, 2.0**h_bits


def _fit_row(d2_row: np.ndarray, perplexity: float, tol: float = 1e-4, max_iter: int = 200):
    """Bisection on the Gaussian precision to match the target perplexity.

    Rows whose distances are all (near) zero cannot reach the target; they
    fall back to uniform affinities.
    """
    if float(d2_row.max()) <= 0.0:
        return np.full_like(d2_row, 1.0 / d2_row.shape[0])
    beta, lo, hi = 1.0, 0.0, np.inf
    p, perp = _row_affinities(d2_row, beta)
    for _ in range(max_iter):
        if abs(perp - perplexity) <= tol:
            return p
        if perp > perplexity:
            lo = beta
            beta = beta * 2.0 if not np.isfinite(hi) else (beta + hi) / 2.0
        else:
            hi = beta
            beta = beta / 2.0 if lo == 0.0 else (beta + lo) / 2.0
        p, perp = _row_affinities(d2_row, beta)
    return p


def joint_affinities(X: np.ndarray, perplexity: float) -> np.ndarray:
    n = X.shape[0]
    d2 = cdist(X, X, "sqeuclidean")
    cond = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        p = _fit_row(row, perplexity)
        cond[i, np.arange(n) != i] = p
    joint = (cond + cond.T) / (2.0 * n)
    return np.maximum(joint, _EPS)


def _low_dim_similarities(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = cdist(Y, Y, "sqeuclidean")
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), _EPS)
    return q, num


def tsne(
    X: np.ndarray,
    perplexity: float = 10.0,
    seed: int = 0,
    iterations: int = 1000,
    learning_rate: float = 200.0,
    early_exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
    momentum_switch: int = 250,
    initial_momentum: float = 0.5,
    final_momentum: float = 0.8,
) -> Projection2D:
    """Project to 2-D by exact t-SNE with fixed, echoed hyperparameters.

    Gradient descent with momentum (0.5, then 0.8 after the switch), early
    exaggeration of the affinities for the first 250 iterations, and a
    seeded Gaussian init at scale 1e-4.  The KL divergence against the
    un-exaggerated affinities is traced every iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 5:
        raise E2vError(f"t-SNE needs at least 5 points, got {n}")
    if not perplexity < (n - 1) / 3:
        raise E2vError(f"perplexity {perplexity} infeasible for n={n}; need < {(n - 1) / 3:.2f}")

    p = joint_affinities(X, perplexity)
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(Y)
    kl_trace = np.zeros(iterations)

    for it in range(iterations):
        p_eff = p * early_exaggeration if it < exaggeration_iters else p
        q, num = _low_dim_similarities(Y)
        kl_trace[it] = float(np.sum(p * np.log(p / q)))
        weights = (p_eff - q) * num
        grad = 4.0 * (Y * weights.sum(axis=1)[:, None] - weights @ Y)
        momentum = initial_momentum if it < momentum_switch else final_momentum
        velocity = momentum * velocity - learning_rate * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)

    return Projection2D(
        coords=Y, perplexity=perplexity, seed=seed, iterations=iterations, kl_trace=kl_trace
    )
