"""Evaluation protocols: entropy/KDE, t-SNE, budget sweeps, and overlaps."""

from .budget import (
    OverlapMatrix,
    RmseCurve,
    best_tail_average,
    feature_budget_sweep,
    overlap_matrix,
    saturation_dimension,
)
from .entropy import EntropyReport, KdeCurve, classify_families, entropy, kde
from .sweep import SweepPoint, SweepReport, missing_ratio_sweep
from .tsne import Projection2D, tsne

__all__ = [
    "EntropyReport",
    "KdeCurve",
    "OverlapMatrix",
    "Projection2D",
    "RmseCurve",
    "SweepPoint",
    "SweepReport",
    "best_tail_average",
    "classify_families",
    "entropy",
    "feature_budget_sweep",
    "kde",
    "missing_ratio_sweep",
    "overlap_matrix",
    "saturation_dimension",
    "tsne",
]
