"""Cleaning chain: imputation, k-sigma outliers, label encoding, splitting.

The chain runs ``impute -> detect_outliers -> label_encode -> split`` and
optionally ``remove_outliers`` (train side only) and ``standardize``.
"""
from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .ingest import (CATEGORICAL, NUMERIC, DATASET_KINDS, Dataset, FeatureSchema,
                     class_taxonomy)

DEFAULT_K = 3.0


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EncodedDataset:
    matrix: np.ndarray                  # (n, p) float64, no missing cells
    labels: np.ndarray                  # (n,) int64 class indices
    class_order: tuple[str, ...]
    encoders: dict                      # feature name -> {value: code}
    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]
    dataset_kind: str = ""
    unseen: dict = field(default_factory=dict)   # feature name -> unseen-value count

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.labels.shape[0]:
            raise PreprocessError("matrix and labels disagree on record count")
        if self.matrix.shape[1] != len(self.feature_names):
            raise PreprocessError("matrix width differs from feature count")

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def p(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.class_order)

    @property
    def categorical(self) -> tuple[int, ...]:
        return tuple(j for j, k in enumerate(self.feature_kinds) if k == CATEGORICAL)

    def take(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, matrix=self.matrix[idx], labels=self.labels[idx], unseen={})

    def with_matrix(self, matrix) -> "EncodedDataset":
        return replace(self, matrix=np.ascontiguousarray(matrix, dtype=np.float64))

    def decode(self, j: int, code: int):
        """Inverse of the encoder of categorical feature ``j`` (None for the reserved code)."""
        inv = {c: v for v, c in self.encoders[self.feature_names[j]].items()}
        return inv.get(int(code))


@dataclass(frozen=True, eq=False)
class OutlierReport:
    rows: np.ndarray       # record index per flagged cell
    features: np.ndarray   # feature index per flagged cell
    values: np.ndarray
    mu: np.ndarray         # mean of that cell's feature
    sigma: np.ndarray      # population std of that cell's feature
    k: float
    n: int

    @property
    def flagged(self) -> list[tuple]:
        return [(int(i), int(j), float(v), float(m), float(s))
                for i, j, v, m, s in zip(self.rows, self.features, self.values, self.mu, self.sigma)]

    @property
    def flagged_records(self) -> np.ndarray:
        return np.unique(self.rows)

    def __len__(self):
        return int(self.rows.size)

    def to_text(self, feature_names=None) -> str:
        lines = [f"# outlier report k = {self.k!r} n = {self.n} cells = {len(self)}"]
        for i, j, v, m, s in self.flagged:
            name = feature_names[j] if feature_names is not None else str(j)
            lines.append(f"{i} {name} {v!r} mu={m!r} sigma={s!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class SplitResult:
    train: EncodedDataset
    test: EncodedDataset
    seed: int
    ratio: float
    train_index: np.ndarray
    test_index: np.ndarray
    stratified: bool = False


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray      # 1 where a column passes through
    columns: np.ndarray    # bool mask of transformed columns

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.where(self.columns, (X - self.mean) / self.scale, X)


# ------------------------------------------------------------------ missing

def _missing_mask(col: np.ndarray, kind: str) -> np.ndarray:
    if kind == NUMERIC:
        return np.isnan(col)
    return np.array([v is None for v in col], dtype=bool)


def find_missing(dataset: Dataset) -> list[tuple[int, int]]:
    """(record, feature) index pairs of every missing cell, row-major order."""
    if dataset.n == 0 or dataset.schema.p == 0:
        return []
    mask = np.column_stack([_missing_mask(c, k) for c, k in zip(dataset.columns, dataset.schema.kinds)])
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(mask))]


def _mode(values) -> str:
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


def impute_values(dataset: Dataset) -> dict:
    """Fill value per feature name: mean for numeric, mode for categorical."""
    fills = {}
    for name, kind, col in zip(dataset.schema.names, dataset.schema.kinds, dataset.columns):
        miss = _missing_mask(col, kind)
        if miss.all():
            fills[name] = None
        elif kind == NUMERIC:
            fills[name] = float(np.mean(col[~miss]))
        else:
            fills[name] = _mode(col[~miss].tolist())
    return fills


def fill_missing(dataset: Dataset, fills: dict) -> Dataset:
    cols = []
    for name, kind, col in zip(dataset.schema.names, dataset.schema.kinds, dataset.columns):
        miss = _missing_mask(col, kind)
        if miss.any():
            if fills.get(name) is None:
                raise PreprocessError(f"feature fully missing: {name!r}")
            col = col.copy()
            col[miss] = fills[name]
        cols.append(col)
    return dataset.with_columns(cols)


def impute(dataset: Dataset, strategy: str = "mean-mode") -> Dataset:
    """Fill numeric gaps with the feature mean and categorical gaps with the mode.

    Mode ties go to the lexicographically smallest value.
    """
    if strategy != "mean-mode":
        raise ValueError(f"unknown imputation strategy {strategy!r}")
    return fill_missing(dataset, impute_values(dataset))


# ----------------------------------------------------------------- outliers

def _numeric_view(data):
    """(matrix of numeric columns, their feature indices) of a Dataset or EncodedDataset."""
    if isinstance(data, EncodedDataset):
        idx = [j for j, k in enumerate(data.feature_kinds) if k == NUMERIC]
        return data.matrix[:, idx], idx
    idx = [j for j, k in enumerate(data.schema.kinds) if k == NUMERIC]
    if not idx:
        return np.zeros((data.n, 0)), idx
    return np.column_stack([data.columns[j] for j in idx]), idx


def detect_outliers(dataset, k: float = DEFAULT_K) -> OutlierReport:
    """Flag numeric cells with ``|x - mu| > k sigma`` (population sigma).

    Features with sigma = 0 are never flagged.  The dataset is not modified.
    """
    if not k > 0:
        raise ValueError("k must be positive")
    M, idx = _numeric_view(dataset)
    if np.isnan(M).any():
        raise PreprocessError("detect_outliers needs an imputed dataset")
    n = M.shape[0]
    if n == 0 or M.shape[1] == 0:
        e = np.zeros(0)
        return OutlierReport(e.astype(np.int64), e.astype(np.int64), e, e, e, float(k), n)
    mu = M.mean(axis=0)
    sigma = M.std(axis=0)
    hit = (np.abs(M - mu) > k * sigma) & (sigma > 0)
    r, c = np.nonzero(hit)
    feats = np.asarray(idx, dtype=np.int64)[c]
    return OutlierReport(r.astype(np.int64), feats, M[r, c], mu[c], sigma[c], float(k), n)


def remove_outliers(dataset, report: OutlierReport):
    """Drop every record with at least one flagged cell, keeping survivor order."""
    n = dataset.n
    if report.n != n:
        raise PreprocessError("report was produced from a different dataset")
    keep = np.ones(n, dtype=bool)
    keep[report.rows] = False
    if not keep.any():
        raise PreprocessError("outlier removal would empty dataset")
    if keep.all():
        return dataset
    return dataset.take(np.nonzero(keep)[0])


# ----------------------------------------------------------------- encoding

def default_class_order(dataset: Dataset) -> tuple[str, ...]:
    if dataset.schema.dataset_kind in DATASET_KINDS:
        return class_taxonomy(dataset.schema.dataset_kind).class_order
    return tuple(sorted(set(dataset.labels.tolist())))


def _label_indices(labels, class_order) -> np.ndarray:
    pos = {c: i for i, c in enumerate(class_order)}
    bad = sorted({lab for lab in labels.tolist() if lab not in pos})
    if bad:
        raise PreprocessError(f"labels outside class order: {bad}")
    return np.array([pos[lab] for lab in labels.tolist()], dtype=np.int64)


def fit_encoders(dataset: Dataset) -> dict:
    enc = {}
    for name, kind, col in zip(dataset.schema.names, dataset.schema.kinds, dataset.columns):
        if kind == CATEGORICAL:
            values = sorted(set(col.tolist()))
            if None in values:
                raise PreprocessError(f"feature {name!r} has missing cells; impute first")
            enc[name] = {v: i for i, v in enumerate(values)}
    return enc


def apply_encoding(encoders: dict, dataset: Dataset, class_order=None) -> EncodedDataset:
    """Encode with fitted maps; unseen values get the reserved code ``len(map)``."""
    class_order = tuple(class_order or default_class_order(dataset))
    schema = dataset.schema
    X = np.empty((dataset.n, schema.p), dtype=np.float64)
    unseen = {}
    for j, (name, kind) in enumerate(schema.features):
        col = dataset.columns[j]
        if kind == NUMERIC:
            if np.isnan(col).any():
                raise PreprocessError(f"feature {name!r} has missing cells; impute first")
            X[:, j] = col
            continue
        m = encoders[name]
        reserved = len(m)
        codes = np.array([m.get(v, reserved) for v in col.tolist()], dtype=np.float64)
        miss = int(np.count_nonzero(codes == reserved))
        if miss:
            unseen[name] = miss
        X[:, j] = codes
    if unseen:
        total = sum(unseen.values())
        warnings.warn(f"{total} unseen categorical value(s) mapped to reserved codes: "
                      + ", ".join(f"{k}={v}" for k, v in sorted(unseen.items())), stacklevel=2)
    return EncodedDataset(X, _label_indices(dataset.labels, class_order), class_order, encoders,
                          schema.names, schema.kinds, schema.dataset_kind, unseen)


def label_encode(dataset: Dataset, class_order=None) -> EncodedDataset:
    """Lexicographic integer codes per categorical feature; labels to class indices."""
    return apply_encoding(fit_encoders(dataset), dataset, class_order)


def encoded_from_matrix(X, y, class_order=None, feature_names=None, categorical=()) -> EncodedDataset:
    """Wrap a ready numeric matrix (tests, synthetic data)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if class_order is None:
        class_order = tuple(f"c{i}" for i in range(int(y.max()) + 1 if y.size else 1))
    names = tuple(feature_names or (f"f{j}" for j in range(X.shape[1])))
    kinds = tuple(CATEGORICAL if j in categorical else NUMERIC for j in range(X.shape[1]))
    return EncodedDataset(X, y, tuple(class_order), {}, names, kinds)


def dataset_from_matrix(X, labels=None, kind: str = "synthetic") -> Dataset:
    """Numeric-only Dataset from a matrix; NaN cells are missing."""
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    schema = FeatureSchema(tuple((f"f{j}", NUMERIC) for j in range(p)), "label", kind)
    labels = np.array(["x"] * n if labels is None else list(labels), dtype=object)
    return Dataset(schema, tuple(X[:, j].copy() for j in range(p)), labels, labels)


# -------------------------------------------------------------------- split

def split(dataset: EncodedDataset, ratio: float = 0.8, seed: int = 0,
          stratified: bool = False) -> SplitResult:
    """Seeded random train/test split.

    Unstratified: ``floor(ratio * n)`` train records.  Stratified: each class
    contributes ``floor(ratio * n_c + 0.5)`` records; a class of one record
    goes to train with a warning.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    n = dataset.n
    if n < 2:
        raise ValueError("split needs at least two records")
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(n)
        n_tr = int(np.floor(ratio * n))
        tr, te = perm[:n_tr], perm[n_tr:]
    else:
        tr_parts, te_parts = [], []
        for c in range(dataset.n_classes):
            idx = np.nonzero(dataset.labels == c)[0]
            if idx.size == 0:
                continue
            if idx.size == 1:
                warnings.warn(f"class {dataset.class_order[c]!r} has a single record; "
                              "it goes to the training side", stacklevel=2)
                tr_parts.append(idx)
                continue
            idx = idx[rng.permutation(idx.size)]
            k = int(np.floor(ratio * idx.size + 0.5))
            tr_parts.append(idx[:k])
            te_parts.append(idx[k:])
        tr = np.concatenate(tr_parts) if tr_parts else np.zeros(0, np.int64)
        te = np.concatenate(te_parts) if te_parts else np.zeros(0, np.int64)
    tr, te = np.sort(tr), np.sort(te)
    return SplitResult(dataset.take(tr), dataset.take(te), seed, ratio, tr, te, stratified)


def stratified_subsample(labels: np.ndarray, size: int, seed: int) -> np.ndarray:
    """Sorted indices of a class-proportional subsample of ``size`` records."""
    n = labels.size
    if size >= n:
        return np.arange(n)
    res = split_indices(labels, size / n, seed)
    return res[0]


def split_indices(labels, ratio, seed):
    """Index-only stratified split with the same rule as :func:`split`."""
    enc = encoded_from_matrix(np.zeros((labels.size, 0)), labels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = split(enc, ratio, seed, stratified=True)
    return res.train_index, res.test_index


# ---------------------------------------------------------- standardization

def fit_standardizer(train: EncodedDataset, include_categorical: bool = False) -> Standardizer:
    X = train.matrix
    cols = np.array([include_categorical or k == NUMERIC for k in train.feature_kinds], dtype=bool)
    mean = X.mean(axis=0) if train.n else np.zeros(train.p)
    sd = X.std(axis=0) if train.n else np.zeros(train.p)
    cols &= sd > 0
    mean = np.where(cols, mean, 0.0)
    scale = np.where(cols, sd, 1.0)
    return Standardizer(mean, scale, cols)


def standardize(train: EncodedDataset, test: EncodedDataset, include_categorical: bool = False):
    """Scale with train statistics; constant train columns pass through."""
    st = fit_standardizer(train, include_categorical)
    return train.with_matrix(st.transform(train.matrix)), test.with_matrix(st.transform(test.matrix)), st
