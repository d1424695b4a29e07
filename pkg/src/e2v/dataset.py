"""Property tables, train/test splits, k-fold machinery, and standardization.

Property data over the elements is sparse by nature, so missing values are
first-class here: a table stores an optional value per symbol, and splits
account for exactly which known-value elements were withheld.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import E2vError


@dataclass(frozen=True)
class PropertyTable:
    name: str
    units: str
    values: dict[str, float | None]

    def known_symbols(self) -> tuple[str, ...]:
        return tuple(sorted(s for s, v in self.values.items() if v is not None))

    def known_values(self) -> dict[str, float]:
        return {s: v for s, v in self.values.items() if v is not None}

    def value_of(self, symbol: str) -> float | None:
        return self.values.get(symbol)


def load_property_table(
    path: str | Path,
    manifest_symbols: Iterable[str],
    name: str | None = None,
    units: str = "",
) -> PropertyTable:
    """Read ``symbol,value`` CSV rows; blank values mean missing."""
    path = Path(path)
    allowed = set(manifest_symbols)
    values: dict[str, float | None] = {}
    meta_path = path.with_suffix("").with_suffix(".meta.json") if path.suffix == ".csv" else None
    if meta_path is not None and meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        name = name if name is not None else meta.get("name")
        units = units or meta.get("units", "")
    if name is None:
        name = path.stem
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["symbol", "value"]:
            raise E2vError(f"{path}: expected header symbol,value")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            symbol = row[0].strip()
            raw = row[1].strip() if len(row) > 1 else ""
            if symbol not in allowed:
                raise E2vError(f"{path}:{line_no}: symbol {symbol!r} not in corpus manifest")
            if raw == "":
                values[symbol] = None
                continue
            try:
                value = float(raw)
            except ValueError:
                raise E2vError(f"{path}:{line_no}: non-numeric value {raw!r}") from None
            if not math.isfinite(value):
                raise E2vError(f"{path}:{line_no}: non-finite value {raw!r}")
            values[symbol] = value
    return PropertyTable(name=name, units=units, values=values)


@dataclass(frozen=True)
class SplitSpec:
    known: frozenset[str]
    unknown: frozenset[str]
    train: frozenset[str]
    test: frozenset[str]
    missing_rate: float
    seed: int

    def __post_init__(self) -> None:
        if self.train | self.test != self.known:
            raise E2vError("train and test must partition the known set")
        if self.train & self.test:
            raise E2vError("train and test overlap")
        if self.known & self.unknown:
            raise E2vError("known and unknown sets overlap")
        if self.known and self.missing_rate != len(self.test) / len(self.known):
            raise E2vError("missing_rate must equal |test| / |known| exactly")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_split(
    known_symbols: Iterable[str],
    missing_rate: float,
    seed: int,
    unknown_symbols: Iterable[str] = (),
) -> SplitSpec:
    """Withhold ``round(missing_rate * |known|)`` known elements as the test set."""
    known = sorted(set(known_symbols))
    if len(known) < 2:
        raise E2vError(f"need at least 2 known elements, got {len(known)}")
    if not 0 <= missing_rate < 1:
        raise E2vError(f"missing_rate must be in [0, 1), got {missing_rate}")
    n_test = _round_half_up(missing_rate * len(known))
    if len(known) - n_test < 1:
        raise E2vError("split leaves no training elements")
    rng = np.random.default_rng(seed)
    test = frozenset(rng.choice(known, size=n_test, replace=False).tolist())
    return SplitSpec(
        known=frozenset(known),
        unknown=frozenset(unknown_symbols),
        train=frozenset(known) - test,
        test=test,
        missing_rate=n_test / len(known),
        seed=seed,
    )


def kfold(symbols: Sequence, k: int, seed: int) -> list[tuple[tuple, tuple]]:
    """Seeded shuffle, then k contiguous folds of near-equal size."""
    items = list(symbols)
    n = len(items)
    if k < 2:
        raise E2vError(f"k must be >= 2, got {k}")
    if k > n:
        raise E2vError(f"k={k} exceeds item count {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shuffled = [items[i] for i in order]
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(shuffled[start : start + size])
        start += size
    out = []
    for i in range(k):
        validation = tuple(folds[i])
        train = tuple(x for j, fold in enumerate(folds) if j != i for x in fold)
        out.append((train, validation))
    return out


def subset_id(indices: Iterable[int]) -> str:
    joined = ",".join(str(i) for i in sorted(indices))
    return "idx:" + hashlib.sha256(joined.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    fitted_on: str

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.std


def fit_standardizer(
    rows: np.ndarray, subset: Sequence[int], fitted_on: str | None = None
) -> Standardizer:
    """Per-dimension z-scoring fitted on the given rows (population std).

    Zero-variance dimensions get std 1 so constant columns map to zero.
    """
    subset = list(subset)
    if not subset:
        raise E2vError("standardizer subset must be non-empty")
    rows = np.asarray(rows, dtype=np.float64)
    picked = rows[subset]
    mean = picked.mean(axis=0)
    std = picked.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return Standardizer(
        mean=mean, std=std, fitted_on=fitted_on if fitted_on is not None else subset_id(subset)
    )
