from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e2v.dataset import (
    SplitSpec,
    fit_standardizer,
    kfold,
    load_property_table,
    make_split,
    subset_id,
)
from e2v.errors import E2vError

PROPERTIES = Path(__file__).resolve().parent.parent / "data" / "properties"
MANIFEST_SYMBOLS = ["He", "C", "Ar", "Ca", "Br", "Nb", "Sm", "Au"]


def test_load_vdw_table_ground_truth():
    table = load_property_table(PROPERTIES / "vdw_radius.csv", MANIFEST_SYMBOLS)
    assert table.values["He"] == 1.40
    assert table.values["C"] == 1.70
    assert len(table.known_symbols()) == 8
    assert table.units == "angstrom"


def test_load_table_rejects_unknown_symbol(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("symbol,value\nXx,1.0\n")
    with pytest.raises(E2vError, match="Xx"):
        load_property_table(path, MANIFEST_SYMBOLS)


def test_load_table_all_blank(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("symbol,value\nHe,\nC,\n")
    table = load_property_table(path, MANIFEST_SYMBOLS)
    assert table.known_symbols() == ()


def test_load_table_non_numeric_reports_row(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("symbol,value\nHe,1.0\nC,abc\n")
    with pytest.raises(E2vError, match=":3:"):
        load_property_table(path, MANIFEST_SYMBOLS)


def test_make_split_sizes():
    split = make_split([f"e{i}" for i in range(10)], 0.2, seed=42)
    assert len(split.test) == 2
    assert len(split.train) == 8
    assert split.missing_rate == 0.2


def test_make_split_rate_zero():
    split = make_split(["a", "b", "c"], 0.0, seed=0)
    assert split.test == frozenset()
    assert split.missing_rate == 0.0


def test_make_split_deterministic():
    symbols = [f"e{i}" for i in range(20)]
    a = make_split(symbols, 0.3, seed=7)
    b = make_split(symbols, 0.3, seed=7)
    assert a.test == b.test and a.train == b.train


def test_make_split_no_training_left():
    with pytest.raises(E2vError):
        make_split(["a", "b"], 0.8, seed=0)  # rounds to 2 test, 0 train


def test_split_spec_invariants_enforced():
    with pytest.raises(E2vError):
        SplitSpec(
            known=frozenset("ab"),
            unknown=frozenset(),
            train=frozenset("a"),
            test=frozenset("ab"),
            missing_rate=1.0,
            seed=0,
        )


@settings(max_examples=300)
@given(
    st.integers(min_value=2, max_value=60),
    st.floats(min_value=0.0, max_value=0.95),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_split_invariants_property(n, rate, seed):
    symbols = [f"e{i}" for i in range(n)]
    try:
        split = make_split(symbols, rate, seed)
    except E2vError:
        return  # no training rows left; rejected by contract
    assert split.train | split.test == split.known
    assert not (split.train & split.test)
    assert split.missing_rate == len(split.test) / len(split.known)


def test_kfold_96_into_10():
    folds = kfold([f"e{i}" for i in range(96)], 10, seed=0)
    sizes = sorted(len(val) for _, val in folds)
    assert sizes == [9, 9, 9, 9, 10, 10, 10, 10, 10, 10]


def test_kfold_n_equals_k():
    folds = kfold(list("abcde"), 5, seed=1)
    assert all(len(val) == 1 for _, val in folds)


def test_kfold_partition():
    symbols = [f"e{i}" for i in range(23)]
    folds = kfold(symbols, 4, seed=3)
    seen = [s for _, val in folds for s in val]
    assert sorted(seen) == sorted(symbols)
    for train, val in folds:
        assert set(train) | set(val) == set(symbols)
        assert not set(train) & set(val)


def test_kfold_k_exceeds_n():
    with pytest.raises(E2vError):
        kfold(list("abc"), 4, seed=0)


@settings(max_examples=100)
@given(st.integers(min_value=2, max_value=40), st.integers(min_value=2, max_value=10), st.integers(0, 999))
def test_kfold_property(n, k, seed):
    if k > n:
        return
    symbols = list(range(n))
    folds = kfold(symbols, k, seed)
    assert len(folds) == k
    validation = [x for _, val in folds for x in val]
    assert sorted(validation) == symbols
    sizes = {len(val) for _, val in folds}
    assert sizes <= {n // k, n // k + (1 if n % k else 0)}


def test_standardizer_simple_column():
    rows = np.array([[1.0], [3.0]])
    std = fit_standardizer(rows, [0, 1])
    out = std.apply(rows)
    np.testing.assert_allclose(out[:, 0], [-1.0, 1.0])


def test_standardizer_constant_column():
    rows = np.array([[5.0], [5.0], [5.0]])
    std = fit_standardizer(rows, [0, 1, 2])
    assert std.std[0] == 1.0
    np.testing.assert_array_equal(std.apply(rows)[:, 0], [0.0, 0.0, 0.0])


def test_standardizer_random_matrix_centers():
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(20, 8)) * 3 + 1
    std = fit_standardizer(rows, list(range(20)))
    out = std.apply(rows)
    assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(out.std(axis=0) - 1.0) < 1e-9)


def test_standardizer_fit_subset_only():
    rng = np.random.default_rng(1)
    rows = rng.normal(size=(10, 3))
    std = fit_standardizer(rows, [0, 1, 2, 3])
    out = std.apply(rows)
    np.testing.assert_allclose(out[:4].mean(axis=0), 0.0, atol=1e-9)


def test_subset_id_is_order_insensitive():
    assert subset_id([3, 1, 2]) == subset_id([1, 2, 3])
    assert subset_id([1, 2]) != subset_id([1, 3])
    std = fit_standardizer(np.ones((4, 2)), [1, 0])
    assert std.fitted_on == subset_id([0, 1])
