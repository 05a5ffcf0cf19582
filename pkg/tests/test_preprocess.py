import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ensembleguard.ingest import CATEGORICAL, NUMERIC, FeatureSchema, RawRecord, dataset_from_records
from ensembleguard.preprocess import (PreprocessError, apply_encoding, dataset_from_matrix,
                                      detect_outliers, encoded_from_matrix, find_missing,
                                      fit_encoders, impute, label_encode, remove_outliers, split,
                                      standardize, stratified_subsample)

SCHEMA = FeatureSchema((("dur", NUMERIC), ("proto", CATEGORICAL), ("bytes", NUMERIC)), "y", "toy")


def _ds(rows, labels=None):
    labels = labels or ["a"] * len(rows)
    return dataset_from_records(SCHEMA, [RawRecord(tuple(r), lab) for r, lab in zip(rows, labels)])


def brute_outliers(M, k):
    """Flagged (row, col) cells recomputed with plain Python loops."""
    n, p = len(M), len(M[0])
    out = set()
    for j in range(p):
        col = [M[i][j] for i in range(n)]
        mu = sum(col) / n
        sigma = math.sqrt(sum((v - mu) ** 2 for v in col) / n)
        if sigma == 0:
            continue
        for i in range(n):
            if abs(col[i] - mu) > k * sigma:
                out.add((i, j))
    return out


# ------------------------------------------------------------------ missing

def test_find_missing_examples():
    assert find_missing(_ds([[1.0, "tcp", None], [2.0, "udp", 3.0]])) == [(0, 2)]
    assert find_missing(_ds([[1.0, "tcp", 1.0]])) == []
    ds = dataset_from_matrix(np.array([[np.nan, 1.0], [np.nan, 2.0], [np.nan, 3.0]]))
    assert find_missing(ds) == [(0, 0), (1, 0), (2, 0)]


def test_impute_mean_and_mode():
    ds = _ds([[1.0, "tcp", 0.0], [None, None, 0.0], [3.0, "tcp", 0.0], [2.0, "udp", 0.0]])
    out = impute(ds)
    assert out.columns[0].tolist() == [1.0, 2.0, 3.0, 2.0]
    assert out.columns[1].tolist() == ["tcp", "tcp", "tcp", "udp"]
    assert find_missing(out) == []


def test_impute_fully_missing():
    ds = _ds([[None, "tcp", 1.0], [None, "udp", 2.0]])
    with pytest.raises(PreprocessError, match="feature fully missing"):
        impute(ds)


@given(st.integers(0, 10_000), st.integers(2, 30), st.integers(1, 5), st.floats(0.0, 0.6))
def test_impute_leaves_no_missing(seed, n, p, frac):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    X[rng.random((n, p)) < frac] = np.nan
    X[0] = rng.normal(size=p)        # every column keeps an observed value
    assert find_missing(impute(dataset_from_matrix(X))) == []


# ----------------------------------------------------------------- outliers

def test_outlier_examples():
    X = np.array([[0.0], [0.0], [0.0], [0.0], [5.0]])
    rep = detect_outliers(dataset_from_matrix(X), k=1.5)
    assert rep.flagged == [(4, 0, 5.0, 1.0, 2.0)]
    assert len(detect_outliers(dataset_from_matrix(X), k=3)) == 0
    assert len(detect_outliers(dataset_from_matrix(np.full((3, 1), 7.0)), k=0.01)) == 0


def test_outliers_skip_categorical():
    ds = _ds([[0.0, "a", 1.0]] * 4 + [[5.0, "b", 1.0]])
    rep = detect_outliers(ds, k=1.5)
    assert rep.flagged_records.tolist() == [4] and rep.features.tolist() == [0]


@pytest.mark.parametrize("seed", range(50))
def test_outliers_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_t(3, size=(50, 5))
    X[:, rng.integers(5)] = 1.25                      # one constant column
    k = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
    rep = detect_outliers(dataset_from_matrix(X), k=k)
    assert set(zip(rep.rows.tolist(), rep.features.tolist())) == brute_outliers(X.tolist(), k)


def test_remove_outliers_examples():
    X = np.array([[0.0], [0.0], [0.0], [0.0], [5.0]])
    ds = dataset_from_matrix(X)
    assert remove_outliers(ds, detect_outliers(ds, 1.5)).n == 4
    assert remove_outliers(ds, detect_outliers(ds, 3.0)) is ds
    two = dataset_from_matrix(np.array([[0.0], [1.0]]))
    with pytest.raises(PreprocessError, match="outlier removal would empty dataset"):
        remove_outliers(two, detect_outliers(two, 0.5))


# ----------------------------------------------------------------- encoding

def test_label_encode_sorted_codes():
    ds = _ds([[0.0, v, 1.0] for v in ["tcp", "udp", "tcp", "icmp"]])
    enc = label_encode(ds)
    assert enc.matrix[:, 1].tolist() == [1.0, 2.0, 1.0, 0.0]
    assert enc.encoders["proto"] == {"icmp": 0, "tcp": 1, "udp": 2}
    assert enc.matrix[:, 0].tolist() == [0.0] * 4


def test_label_encode_numeric_identity():
    X = np.random.default_rng(0).normal(size=(6, 3))
    enc = label_encode(dataset_from_matrix(X))
    assert np.array_equal(enc.matrix, X)


def test_two_categoricals_encoded_independently():
    sch = FeatureSchema((("a", CATEGORICAL), ("b", CATEGORICAL)), "y", "toy")
    ds = dataset_from_records(sch, [RawRecord(("x", "z"), "l"), RawRecord(("y", "x"), "l")])
    enc = label_encode(ds)
    assert enc.encoders == {"a": {"x": 0, "y": 1}, "b": {"x": 0, "z": 1}}
    assert enc.matrix.tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_unseen_value_gets_reserved_code():
    enc = fit_encoders(_ds([[0.0, v, 1.0] for v in ["tcp", "udp", "icmp"]]))
    with pytest.warns(UserWarning, match="unseen"):
        out = apply_encoding(enc, _ds([[4.5, "gre", 1.0], [1.0, "tcp", 2.0]]))
    assert out.matrix[:, 1].tolist() == [3.0, 1.0]
    assert out.matrix[:, 0].tolist() == [4.5, 1.0]
    assert out.unseen == {"proto": 1}
    assert out.decode(1, 3) is None


@given(st.lists(st.sampled_from(["tcp", "udp", "icmp", "gre", "sctp", "a,b", ""]), min_size=1,
                max_size=40))
def test_encode_decode_round_trip(values):
    ds = _ds([[0.0, v or "-", 1.0] for v in values])
    enc = label_encode(ds)
    assert [enc.decode(1, c) for c in enc.matrix[:, 1]] == [v or "-" for v in values]


# -------------------------------------------------------------------- split

def test_split_examples():
    ds = encoded_from_matrix(np.arange(10.0)[:, None], np.zeros(10, dtype=int))
    s = split(ds, 0.8, seed=1)
    assert s.train.n == 8 and s.test.n == 2
    assert not set(s.train_index) & set(s.test_index)
    t = split(ds, 0.8, seed=1)
    assert s.train_index.tobytes() == t.train_index.tobytes()
    assert s.train.matrix.tobytes() == t.train.matrix.tobytes()


def test_split_stratified_proportions():
    y = np.array([0] * 8 + [1] * 2)
    ds = encoded_from_matrix(np.zeros((10, 1)), y, class_order=("A", "B"))
    s = split(ds, 0.5, seed=3, stratified=True)
    assert np.bincount(s.train.labels).tolist() == [4, 1]


def test_split_singleton_class_goes_to_train():
    y = np.array([0, 0, 0, 1])
    ds = encoded_from_matrix(np.zeros((4, 1)), y)
    with pytest.warns(UserWarning, match="single record"):
        s = split(ds, 0.5, seed=0, stratified=True)
    assert 3 in s.train_index


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 0.99), st.integers(2, 300), st.booleans())
def test_split_disjoint_and_exhaustive(seed, ratio, n, stratified):
    y = np.random.default_rng(seed).integers(0, 4, size=n)
    ds = encoded_from_matrix(np.zeros((n, 1)), y, class_order=("a", "b", "c", "d"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = split(ds, ratio, seed, stratified=stratified)
    tr, te = set(s.train_index.tolist()), set(s.test_index.tolist())
    assert not tr & te
    assert tr | te == set(range(n))


def test_split_rejects_bad_ratio():
    ds = encoded_from_matrix(np.zeros((4, 1)), np.zeros(4, dtype=int))
    for r in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            split(ds, r)


def test_stratified_subsample_keeps_proportions():
    y = np.array([0] * 900 + [1] * 90 + [2] * 10)
    idx = stratified_subsample(y, 100, seed=0)
    assert np.bincount(y[idx]).tolist() == [90, 9, 1]
    assert np.all(np.diff(idx) > 0)


# ---------------------------------------------------------- standardization

def test_standardize_examples():
    tr = encoded_from_matrix(np.array([[0.0, 5.0], [2.0, 5.0]]), [0, 1])
    te = encoded_from_matrix(np.array([[4.0, 9.0]]), [0])
    a, b, stz = standardize(tr, te)
    assert a.matrix[:, 0].tolist() == [-1.0, 1.0]
    assert b.matrix[0, 0] == 3.0
    assert a.matrix[:, 1].tolist() == [5.0, 5.0] and b.matrix[0, 1] == 9.0


def test_standardize_skips_categorical_by_default():
    tr = encoded_from_matrix(np.array([[0.0, 1.0], [2.0, 3.0]]), [0, 1], categorical=(1,))
    a, _, _ = standardize(tr, tr)
    assert a.matrix[:, 1].tolist() == [1.0, 3.0]
    a, _, _ = standardize(tr, tr, include_categorical=True)
    assert a.matrix[:, 1].tolist() == [-1.0, 1.0]


@given(st.integers(0, 10_000), st.integers(2, 60), st.integers(1, 6))
def test_standardize_moments(seed, n, p):
    rng = np.random.default_rng(seed)
    X = rng.normal(3.0, 10.0, size=(n, p))
    tr = encoded_from_matrix(X, np.zeros(n, dtype=int))
    a, _, _ = standardize(tr, tr)
    sd = X.std(axis=0)
    live = sd > 1e-9 * np.abs(X).max()
    assert np.all(np.abs(a.matrix[:, live].mean(axis=0)) < 1e-9)
    assert np.all(np.abs(a.matrix[:, live].std(axis=0) - 1.0) < 1e-9)
