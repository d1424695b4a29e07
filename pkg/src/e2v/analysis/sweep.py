"""Missing-ratio sweeps comparing inductive predictors against imputation.

For each missing ratio and repeat, a seeded split withholds test elements;
inductive predictors (OLS, MLP) train on the remainder, while the
test-time-training imputer treats the withheld elements as unknown
sequence members.  Reported means carry a 1.96 * std / sqrt(repeats)
confidence half-width.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..dataset import make_split
from ..errors import E2vError
from ..models import MlpConfig, fit_linear, fit_mlp, rmse
from ..ttt import TttConfig, ttt_impute

PREDICTORS = ("ols", "mlp", "ttt")


@dataclass(frozen=True)
class SweepPoint:
    ratio: float
    mean_rmse: float
    ci95: float
    n_runs: int


@dataclass(frozen=True)
class SweepReport:
    predictor: str
    points: tuple[SweepPoint, ...]
    skipped: tuple[str, ...]
    repeats: int
    base_seed: int


def _run_split(
    embeddings: dict[str, np.ndarray],
    values: dict[str, float],
    predictor: str,
    split,
    seed: int,
    order: list[str] | None,
    ttt_overrides: dict | None,
) -> float:
    train = sorted(split.train)
    test = sorted(split.test)
    X_train = np.stack([embeddings[s] for s in train])
    y_train = np.array([values[s] for s in train])
    X_test = np.stack([embeddings[s] for s in test])
    y_test = np.array([values[s] for s in test])
    if predictor == "ols":
        model = fit_linear(X_train, y_train)
        return rmse(y_test, model.predict(X_test))
    if predictor == "mlp":
        model = fit_mlp(X_train, y_train, MlpConfig(seed=seed))
        return rmse(y_test, model.predict(X_test))
    dim = X_train.shape[1]
    overrides = dict(ttt_overrides or {})
    overrides.setdefault("seed", seed)
    config = TttConfig(input_dim=dim, **overrides)
    train_values = {s: values[s] for s in train}
    result = ttt_impute(embeddings, train_values, config, order=order)
    return rmse(y_test, np.array([result.predictions[s] for s in test]))


def missing_ratio_sweep(
    embeddings: dict[str, np.ndarray],
    values: dict[str, float],
    predictor: str,
    ratios,
    repeats: int = 5,
    base_seed: int = 0,
    order: list[str] | None = None,
    ttt_overrides: dict | None = None,
) -> SweepReport:
    """Mean held-out RMSE per missing ratio over seeded repeated splits."""
    if predictor not in PREDICTORS:
        raise E2vError(f"unknown predictor {predictor!r}; pick one of {PREDICTORS}")
    ratios = [float(r) for r in ratios]
    for ratio in ratios:
        if not 0.0 < ratio <= 0.9:
            raise E2vError(f"missing ratios must lie in (0, 0.9], got {ratio}")
    known = sorted(s for s in values if s in embeddings)
    if len(known) < 5:
        raise E2vError(f"need at least 5 known values, got {len(known)}")

    min_train = 5 if predictor == "mlp" else 2
    points: list[SweepPoint] = []
    skipped: list[str] = []
    for ratio in ratios:
        run_rmses: list[float] = []
        for rep in range(repeats):
            seed = base_seed + rep
            split = make_split(known, ratio, seed)
            if len(split.train) < min_train:
                message = (
                    f"ratio {ratio} leaves {len(split.train)} training elements "
                    f"(< {min_train}); skipped"
                )
                warnings.warn(message, stacklevel=2)
                skipped.append(message)
                run_rmses = []
                break
            run_rmses.append(
                _run_split(embeddings, values, predictor, split, seed, order, ttt_overrides)
            )
        if not run_rmses:
            continue
        arr = np.asarray(run_rmses)
        ci = 1.96 * float(arr.std(ddof=1)) / np.sqrt(len(arr)) if len(arr) > 1 else 0.0
        points.append(
            SweepPoint(ratio=ratio, mean_rmse=float(arr.mean()), ci95=ci, n_runs=len(arr))
        )
    return SweepReport(
        predictor=predictor,
        points=tuple(points),
        skipped=tuple(skipped),
        repeats=repeats,
        base_seed=base_seed,
    )
