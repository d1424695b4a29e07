"""Posterior entropy, kernel density estimates, and held-out family posteriors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..corpus import FAMILIES
from ..errors import E2vError
from ..models import N_FAMILY_CLASSES, fit_softmax

ENTROPY_GUARD = 1e-9


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in bits of a posterior, with a 1e-9 log guard.

    Every entry contributes, zeros included; the guard keeps log2(0) out of
    the sum, at the cost of an O(1e-9) offset near one-hot posteriors.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < 0):
        raise E2vError("posterior entries must be non-negative")
    if abs(float(probs.sum()) - 1.0) > 1e-6:
        raise E2vError(f"posterior must sum to 1, got {probs.sum()}")
    return float(-np.sum(probs * np.log2(probs + ENTROPY_GUARD)))


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapz(self.density, self.grid))


def kde(values, grid_points: int = 256, bandwidth_floor: float = 1e-3) -> KdeCurve:
    """Gaussian KDE with the Silverman bandwidth 1.06 * std * n^(-1/5).

    The 256-point grid spans [min - 3h, max + 3h], so the trapezoid
    integral of the density is 1 within about 1e-2.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] < 2:
        raise E2vError(f"KDE needs at least 2 values, got shape {values.shape}")
    n = values.shape[0]
    spread = float(values.std(ddof=1))
    bandwidth = max(1.06 * spread * n ** (-1 / 5), bandwidth_floor)
    grid = np.linspace(values.min() - 3 * bandwidth, values.max() + 3 * bandwidth, grid_points)
    diffs = (grid[:, None] - values[None, :]) / bandwidth
    density = np.exp(-0.5 * diffs**2).sum(axis=1) / (n * bandwidth * np.sqrt(2 * np.pi))
    return KdeCurve(grid=grid, density=density, bandwidth=bandwidth)


@dataclass(frozen=True)
class EntropyReport:
    variant_label: str
    entropies: dict[str, float]
    curve: KdeCurve
    posteriors: dict[str, np.ndarray]
    skipped_folds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        limit = np.log2(N_FAMILY_CLASSES) + 1e-6
        for symbol, h in self.entropies.items():
            if not -1e-6 <= h <= limit:
                raise E2vError(f"entropy for {symbol} out of range: {h}")


def family_label_index(family: str) -> int:
    try:
        return FAMILIES.index(family)
    except ValueError:
        raise E2vError(f"unknown family label {family!r}") from None


def classify_families(
    vectors: dict[str, np.ndarray],
    labels: dict[str, str],
    folds: list[tuple[tuple, tuple]],
    variant_label: str = "",
) -> EntropyReport:
    """Held-out family posteriors and their entropies, fold by fold.

    Each fold trains the softmax classifier on its training elements and
    records posteriors for the validation elements; folds whose training
    side shows fewer than two families are skipped with a warning.
    """
    missing = [s for s in labels if s not in vectors]
    if missing:
        raise E2vError(f"labeled elements without vectors: {sorted(missing)}")
    posteriors: dict[str, np.ndarray] = {}
    skipped: list[int] = []
    for fold_index, (train_syms, val_syms) in enumerate(folds):
        train_labels = [family_label_index(labels[s]) for s in train_syms]
        if len(set(train_labels)) < 2:
            warnings.warn(
                f"fold {fold_index} has < 2 families in training; skipped", stacklevel=2
            )
            skipped.append(fold_index)
            continue
        X_train = np.stack([vectors[s] for s in train_syms])
        model = fit_softmax(X_train, np.array(train_labels))
        X_val = np.stack([vectors[s] for s in val_syms])
        probs = model.predict_proba(X_val)
        for i, symbol in enumerate(val_syms):
            posteriors[symbol] = probs[i]
    if not posteriors:
        raise E2vError("every fold was skipped; no posteriors to report")
    entropies = {s: entropy(p) for s, p in sorted(posteriors.items())}
    return EntropyReport(
        variant_label=variant_label,
        entropies=entropies,
        curve=kde(list(entropies.values())) if len(entropies) >= 2 else _point_curve(entropies),
        posteriors=posteriors,
        skipped_folds=tuple(skipped),
    )


def _point_curve(entropies: dict[str, float]) -> KdeCurve:
    value = next(iter(entropies.values()))
    return kde([value, value])
