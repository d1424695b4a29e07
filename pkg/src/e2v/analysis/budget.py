"""Feature-budget RMSE curves, their tail statistics, and top-k overlaps.

The budget protocol ranks embedding dimensions inside each training fold
by absolute standardized coefficient, refits on the top k for every
budget, and averages held-out RMSE across folds; the full-feature baseline
is appended as the final point of the curve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import leaves_list, linkage
from scipy.spatial.distance import squareform

from ..dataset import fit_standardizer
from ..errors import E2vError, LeakageError
from ..models import FeatureRanking, fit_linear, rank_features, rmse


def _curve_values(curve) -> np.ndarray:
    values = np.asarray(curve.rmse if isinstance(curve, RmseCurve) else curve, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] < 1:
        raise E2vError("curve must hold at least one value")
    return values


def best_tail_average(curve) -> float:
    """Mean RMSE from the first minimum of the curve through its end."""
    values = _curve_values(curve)
    start = int(np.argmin(values))
    return float(values[start:].mean())


def saturation_dimension(curve, tau: float = 0.02) -> int:
    """Smallest budget whose RMSE is within (1 + tau) of the curve minimum."""
    if isinstance(curve, RmseCurve):
        budgets, values = curve.budgets, _curve_values(curve)
    else:
        budgets, values = curve
        values = _curve_values(values)
    floor = (1.0 + tau) * float(values.min())
    for budget, value in zip(budgets, values):
        if value <= floor:
            return int(budget)
    raise AssertionError("unreachable: the minimum always qualifies")


@dataclass(frozen=True)
class RmseCurve:
    budgets: tuple[int, ...]
    rmse: tuple[float, ...]
    best_tail_average: float
    saturation_dim: int
    tau: float = 0.02

    def __post_init__(self) -> None:
        if len(self.budgets) != len(self.rmse):
            raise E2vError("budgets and rmse lengths differ")
        if list(self.budgets) != sorted(self.budgets):
            raise E2vError("budgets must be ascending")

    @staticmethod
    def from_points(budgets: Sequence[int], values: Sequence[float], tau: float = 0.02):
        budgets = tuple(int(b) for b in budgets)
        values = tuple(float(v) for v in values)
        return RmseCurve(
            budgets=budgets,
            rmse=values,
            best_tail_average=best_tail_average(values),
            saturation_dim=saturation_dimension((budgets, values), tau),
            tau=tau,
        )


def feature_budget_sweep(
    X: np.ndarray,
    y: np.ndarray,
    budgets: Sequence[int],
    folds: list[tuple[tuple, tuple]],
    tau: float = 0.02,
) -> RmseCurve:
    """Cross-validated RMSE per feature budget, plus the full-dim baseline.

    Within each fold: standardize on the training rows, fit the full-dim
    linear model, rank coefficients, then refit from scratch on each top-k
    column set and score the validation rows.  Rankings never see
    validation rows, and the full-dim budget reuses the baseline fit so it
    matches bit for bit.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dim = X.shape[1]
    budgets = [int(b) for b in budgets]
    if budgets != sorted(budgets):
        raise E2vError("budgets must be ascending")
    if budgets and budgets[-1] > dim:
        raise E2vError(f"budget {budgets[-1]} exceeds dimension {dim}")
    if dim not in budgets:
        budgets = budgets + [dim]

    per_fold = np.zeros((len(folds), len(budgets)))
    for f, (train_idx, val_idx) in enumerate(folds):
        train_idx = [int(i) for i in train_idx]
        val_idx = [int(i) for i in val_idx]
        standardizer = fit_standardizer(X, train_idx)
        Xs = standardizer.apply(X)
        baseline = fit_linear(Xs[train_idx], y[train_idx], fitted_on=standardizer.fitted_on)
        ranking = rank_features(baseline)
        if ranking.fitted_on != standardizer.fitted_on:
            raise LeakageError("ranking was not fitted on this fold's training rows")
        baseline_rmse = rmse(y[val_idx], baseline.predict(Xs[val_idx]))
        for j, budget in enumerate(budgets):
            if budget == dim:
                per_fold[f, j] = baseline_rmse
                continue
            cols = list(ranking.top(budget))
            refit = fit_linear(Xs[np.ix_(train_idx, cols)], y[train_idx])
            per_fold[f, j] = rmse(y[val_idx], refit.predict(Xs[np.ix_(val_idx, cols)]))
    return RmseCurve.from_points(budgets, per_fold.mean(axis=0), tau)


@dataclass(frozen=True)
class OverlapMatrix:
    property_names: tuple[str, ...]
    k: int
    matrix: np.ndarray
    cluster_order: tuple[int, ...]

    def __post_init__(self) -> None:
        m = self.matrix
        if m.shape[0] != m.shape[1] or not np.array_equal(m, m.T):
            raise E2vError("overlap matrix must be symmetric")
        if not np.all(np.diag(m) == self.k):
            raise E2vError("overlap diagonal must equal k")


def overlap_matrix(rankings: list[FeatureRanking], k: int) -> OverlapMatrix:
    """Pairwise sizes of top-k dimension intersections across properties.

    Rows are ordered for display by average-linkage clustering on the
    distance k - overlap.
    """
    if not rankings:
        raise E2vError("need at least one ranking")
    dims = {len(r.order) for r in rankings}
    if len(dims) != 1:
        raise E2vError(f"rankings disagree on dimension: {sorted(dims)}")
    dim = dims.pop()
    if k > dim:
        raise E2vError(f"k={k} exceeds dimension {dim}")
    tops = [set(r.top(k)) for r in rankings]
    n = len(tops)
    matrix = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            matrix[i, j] = len(tops[i] & tops[j])
    if n >= 3:
        distances = squareform(k - matrix, checks=False).astype(np.float64)
        order = tuple(int(i) for i in leaves_list(linkage(distances, method="average")))
    else:
        order = tuple(range(n))
    return OverlapMatrix(
        property_names=tuple(r.property_name for r in rankings),
        k=k,
        matrix=matrix,
        cluster_order=order,
    )
