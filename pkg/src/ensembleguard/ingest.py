"""Readers for NSL-KDD, UNSW-NB15 and CIC-IDS-2017 CSV files.

Every reader returns a :class:`Dataset`: one column array per feature plus
the taxonomy class of each record.  Numeric columns are ``float64`` with
``nan`` marking a missing cell; categorical columns are object arrays with
``None`` marking a missing cell.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NSL_KDD = "NSL-KDD"
UNSW_NB15 = "UNSW-NB15"
CIC_IDS_2017 = "CIC-IDS-2017"
DATASET_KINDS = (NSL_KDD, UNSW_NB15, CIC_IDS_2017)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

_TAXONOMY_FILES = {
    NSL_KDD: "nsl-kdd.map",
    UNSW_NB15: "unsw-nb15.map",
    CIC_IDS_2017: "cic-ids-2017.map",
}

NSL_KDD_FEATURES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins",
    "logged_in", "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files",
    "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate",
    "srv_rerror_rate", "same_srv_rate", "diff_srv_rate",
    "srv_diff_host_rate", "dst_host_count", "dst_host_srv_count",
    "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate", "dst_host_srv_serror_rate",
    "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
)
NSL_KDD_CATEGORICAL = ("protocol_type", "service", "flag")

UNSW_CATEGORICAL = ("proto", "service", "state", "srcip", "dstip")
UNSW_DROPPED = ("id", "label")


class ParseError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class UnknownLabelError(ValueError):
    def __init__(self, labels: Iterable[str], dataset_kind: str):
        self.labels = sorted(set(labels))
        super().__init__(
            f"{dataset_kind}: labels missing from taxonomy: {', '.join(map(repr, self.labels))}")


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[tuple[str, str], ...]
    label_column: str
    dataset_kind: str

    def __post_init__(self):
        names = [n for n, _ in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        for name, kind in self.features:
            if kind not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"feature {name!r} has unknown kind {kind!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.features)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(k for _, k in self.features)

    @property
    def p(self) -> int:
        return len(self.features)

    @property
    def categorical(self) -> tuple[int, ...]:
        return tuple(j for j, (_, k) in enumerate(self.features) if k == CATEGORICAL)


@dataclass(frozen=True)
class RawRecord:
    values: tuple
    label: str


@dataclass(frozen=True)
class AttackTaxonomy:
    dataset_kind: str
    mapping: dict
    class_order: tuple[str, ...]
    display: dict

    @property
    def n_classes(self) -> int:
        return len(self.class_order)

    def index(self, class_name: str) -> int:
        return self.class_order.index(class_name)

    def display_name(self, class_name: str) -> str:
        return self.display.get(class_name, class_name)

    def classify(self, raw_labels: Sequence[str]) -> np.ndarray:
        unknown = {lab for lab in set(raw_labels) if lab not in self.mapping}
        if unknown:
            raise UnknownLabelError(unknown, self.dataset_kind)
        return np.array([self.mapping[lab] for lab in raw_labels], dtype=object)


def parse_taxonomy(text: str, source: str = "<taxonomy>") -> AttackTaxonomy:
    """Read the ``raw_label = ClassName`` text format (``@class`` lines set order)."""
    meta, mapping, order, display = {}, {}, [], {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("@class"):
            name, _, disp = line[len("@class"):].partition("|")
            name = name.strip()
            order.append(name)
            display[name] = disp.strip() or name
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"{source}:{lineno}: expected 'raw_label = ClassName'")
        key, value = key.strip(), value.strip()
        if key in ("kind", "version"):
            meta[key] = value
            continue
        if key in mapping:
            raise ParseError(f"{source}:{lineno}: duplicate raw label {key!r}")
        mapping[key] = value
    if "kind" not in meta:
        raise ParseError(f"{source}: missing 'kind = ...' line")
    if not order:
        raise ParseError(f"{source}: no @class lines")
    stray = sorted(set(mapping.values()) - set(order))
    if stray:
        raise ParseError(f"{source}: classes without @class line: {stray}")
    return AttackTaxonomy(meta["kind"], mapping, tuple(order), display)


def load_taxonomy(path: str | os.PathLike) -> AttackTaxonomy:
    path = Path(path)
    return parse_taxonomy(path.read_text(encoding="utf-8"), str(path))


def class_taxonomy(dataset_kind: str) -> AttackTaxonomy:
    if dataset_kind not in _TAXONOMY_FILES:
        raise ValueError(f"unsupported dataset kind {dataset_kind!r}; expected one of {DATASET_KINDS}")
    ref = resources.files("ensembleguard").joinpath("data", _TAXONOMY_FILES[dataset_kind])
    return parse_taxonomy(ref.read_text(encoding="utf-8"), _TAXONOMY_FILES[dataset_kind])


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: FeatureSchema
    columns: tuple
    labels: np.ndarray          # taxonomy class name per record
    raw_labels: np.ndarray      # label text as found in the file

    def __post_init__(self):
        if len(self.columns) != self.schema.p:
            raise SchemaError(f"{len(self.columns)} columns for {self.schema.p} features")
        for col in self.columns:
            if col.shape[0] != self.labels.shape[0]:
                raise SchemaError("column lengths disagree with label count")

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    def record(self, i: int) -> RawRecord:
        vals = []
        for col, kind in zip(self.columns, self.schema.kinds):
            v = col[i]
            if kind == NUMERIC:
                vals.append(None if np.isnan(v) else float(v))
            else:
                vals.append(v)
        return RawRecord(tuple(vals), str(self.labels[i]))

    @property
    def records(self) -> list[RawRecord]:
        return [self.record(i) for i in range(self.n)]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.schema, tuple(c[idx] for c in self.columns),
                       self.labels[idx], self.raw_labels[idx])

    def with_columns(self, columns) -> "Dataset":
        return Dataset(self.schema, tuple(columns), self.labels, self.raw_labels)

    def class_counts(self) -> dict[str, int]:
        names, counts = np.unique(self.labels.astype(str), return_counts=True)
        return dict(zip(names.tolist(), counts.tolist()))

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema or self.n != other.n:
            return False
        for a, b, kind in zip(self.columns, other.columns, self.schema.kinds):
            if kind == NUMERIC:
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif list(a) != list(b):
                return False
        return list(self.labels) == list(other.labels) and list(self.raw_labels) == list(other.raw_labels)


def dataset_from_records(schema: FeatureSchema, records: Sequence[RawRecord],
                         raw_labels: Sequence[str] | None = None) -> Dataset:
    """Build a Dataset from in-memory records (labels are class names)."""
    cols = []
    for j, kind in enumerate(schema.kinds):
        cells = [r.values[j] for r in records]
        if kind == NUMERIC:
            cols.append(np.array([np.nan if c is None else float(c) for c in cells], dtype=np.float64))
        else:
            cols.append(np.array([None if c is None else str(c) for c in cells], dtype=object))
    for r in records:
        if len(r.values) != schema.p:
            raise SchemaError(f"record has {len(r.values)} values, schema has {schema.p}")
    labels = np.array([r.label for r in records], dtype=object)
    raw = labels if raw_labels is None else np.array(list(raw_labels), dtype=object)
    return Dataset(schema, tuple(cols), labels, raw)


# ------------------------------------------------------------------ parsing

def _numeric_column(cells: Sequence[str], lines: np.ndarray, name: str, path) -> np.ndarray:
    arr = np.array([c.strip() for c in cells], dtype=object)
    arr[arr == ""] = "nan"
    try:
        out = arr.astype(np.float64)
    except ValueError:
        for s, line in zip(arr, lines):
            try:
                float(s)
            except ValueError:
                raise ParseError(f"{path}:{line}: column {name!r}: not a number: {s!r}") from None
        raise
    out[~np.isfinite(out)] = np.nan
    return out


def _categorical_column(cells: Sequence[str]) -> np.ndarray:
    return np.array([c.strip() or None for c in cells], dtype=object)


def _read_rows(path, encoding="utf-8"):
    with open(path, newline="", encoding=encoding, errors="replace") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, row


def _build(schema, cells_by_col, raw_labels, lines, taxonomy, path):
    if taxonomy.dataset_kind != schema.dataset_kind:
        raise ValueError(f"taxonomy is for {taxonomy.dataset_kind}, data is {schema.dataset_kind}")
    cols = []
    for (name, kind), cells in zip(schema.features, cells_by_col):
        if kind == NUMERIC:
            cols.append(_numeric_column(cells, lines, name, path))
        else:
            cols.append(_categorical_column(cells))
    raw = np.array(raw_labels, dtype=object)
    return Dataset(schema, tuple(cols), taxonomy.classify(raw_labels), raw)


def nslkdd_schema() -> FeatureSchema:
    return FeatureSchema(
        tuple((n, CATEGORICAL if n in NSL_KDD_CATEGORICAL else NUMERIC) for n in NSL_KDD_FEATURES),
        "attack", NSL_KDD)


def parse_nslkdd(path, taxonomy: AttackTaxonomy | None = None) -> Dataset:
    """Headerless NSL-KDD file: 41 features, the attack name, optional difficulty."""
    taxonomy = taxonomy or class_taxonomy(NSL_KDD)
    schema = nslkdd_schema()
    p = schema.p
    rows, lines = [], []
    for lineno, row in _read_rows(path):
        if len(row) not in (p + 1, p + 2):
            raise ParseError(f"{path}:{lineno}: expected {p + 1} or {p + 2} columns, got {len(row)}")
        rows.append(row[:p + 1])
        lines.append(lineno)
    if not rows:
        raise ParseError(f"{path}: no records")
    cols = list(zip(*rows))
    raw = [lab.strip().rstrip(".") for lab in cols[p]]
    return _build(schema, cols[:p], raw, np.array(lines), taxonomy, path)


def parse_unswnb15(path, taxonomy: AttackTaxonomy | None = None) -> Dataset:
    """UNSW-NB15 partition CSV with header; ``attack_cat`` is the label."""
    taxonomy = taxonomy or class_taxonomy(UNSW_NB15)
    it = _read_rows(path)
    try:
        _, header = next(it)
    except StopIteration:
        raise ParseError(f"{path}: no records") from None
    header = [h.strip() for h in header]
    if "attack_cat" not in header:
        raise SchemaError(f"{path}: no 'attack_cat' column")
    label_at = header.index("attack_cat")
    keep = [j for j, h in enumerate(header) if j != label_at and h not in UNSW_DROPPED]
    schema = FeatureSchema(
        tuple((header[j], CATEGORICAL if header[j] in UNSW_CATEGORICAL else NUMERIC) for j in keep),
        "attack_cat", UNSW_NB15)
    rows, lines = [], []
    for lineno, row in it:
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        rows.append(row)
        lines.append(lineno)
    if not rows:
        raise ParseError(f"{path}: no records")
    cols = list(zip(*rows))
    raw = [c.strip() or "<blank>" for c in cols[label_at]]
    return _build(schema, [cols[j] for j in keep], raw, np.array(lines), taxonomy, path)


def _dedupe(names):
    seen, out = {}, []
    for n in names:
        if n in seen:
            seen[n] += 1
            out.append(f"{n}.{seen[n]}")
        else:
            seen[n] = 0
            out.append(n)
    return out


def parse_cicids2017(paths, taxonomy: AttackTaxonomy | None = None) -> Dataset:
    """One or more CIC-IDS-2017 daily CSVs, concatenated in the given order."""
    taxonomy = taxonomy or class_taxonomy(CIC_IDS_2017)
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    header = None
    rows, lines, srcs = [], [], []
    for path in paths:
        it = _read_rows(path)
        try:
            _, head = next(it)
        except StopIteration:
            raise ParseError(f"{path}: no records") from None
        head = _dedupe([h.strip() for h in head])
        if header is None:
            header = head
            if "Label" not in header:
                raise SchemaError(f"{path}: no 'Label' column")
        elif head != header:
            raise SchemaError(f"{path}: header differs from {paths[0]}")
        for lineno, row in it:
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            rows.append(row)
            lines.append(lineno)
    if not rows:
        raise ParseError("no records")
    label_at = header.index("Label")
    keep = [j for j in range(len(header)) if j != label_at]
    schema = FeatureSchema(tuple((header[j], NUMERIC) for j in keep), "Label", CIC_IDS_2017)
    cols = list(zip(*rows))
    raw = [c.strip() for c in cols[label_at]]
    where = f"{paths[0]}" if len(paths) == 1 else f"{len(paths)} files"
    return _build(schema, [cols[j] for j in keep], raw, np.array(lines), taxonomy, where)


def parse_dataset(dataset_kind: str, paths, taxonomy: AttackTaxonomy | None = None) -> Dataset:
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    paths = list(paths)
    for p in paths:
        if not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")
    if dataset_kind == NSL_KDD:
        parts = [parse_nslkdd(p, taxonomy) for p in paths]
    elif dataset_kind == UNSW_NB15:
        parts = [parse_unswnb15(p, taxonomy) for p in paths]
    elif dataset_kind == CIC_IDS_2017:
        return parse_cicids2017(paths, taxonomy)
    else:
        raise ValueError(f"unsupported dataset kind {dataset_kind!r}")
    return concat(parts)


def concat(parts: Sequence[Dataset]) -> Dataset:
    first = parts[0]
    if len(parts) == 1:
        return first
    for d in parts[1:]:
        if d.schema != first.schema:
            raise SchemaError("cannot concatenate datasets with different schemas")
    cols = tuple(np.concatenate([d.columns[j] for d in parts]) for j in range(first.schema.p))
    return Dataset(first.schema, cols, np.concatenate([d.labels for d in parts]),
                   np.concatenate([d.raw_labels for d in parts]))


# ------------------------------------------------- normalised on-disk copy

def write_dataset(dataset: Dataset, path) -> None:
    """Write the parsed dataset as a typed CSV (``name:kind`` header)."""
    s = dataset.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# ensembleguard-dataset v1 kind={s.dataset_kind} label={s.label_column}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{n}:{k}" for n, k in s.features] + ["class", "raw_label"])
        num = [k == NUMERIC for k in s.kinds]
        for i in range(dataset.n):
            row = []
            for col, is_num in zip(dataset.columns, num):
                v = col[i]
                if is_num:
                    row.append("" if np.isnan(v) else repr(float(v)))
                else:
                    row.append("" if v is None else v)
            row.append(dataset.labels[i])
            row.append(dataset.raw_labels[i])
            w.writerow(row)


def read_dataset(path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# ensembleguard-dataset v1"):
            raise ParseError(f"{path}: not an ensembleguard dataset file")
        meta = dict(tok.split("=", 1) for tok in first.split()[3:])
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    feats = tuple(tuple(h.rsplit(":", 1)) for h in header[:-2])
    schema = FeatureSchema(feats, meta["label"], meta["kind"])
    if not rows:
        raise ParseError(f"{path}: no records")
    cols = list(zip(*rows))
    lines = np.arange(3, 3 + len(rows))
    out = []
    for (name, kind), cells in zip(feats, cols):
        out.append(_numeric_column(cells, lines, name, path) if kind == NUMERIC
                   else _categorical_column(cells))
    return Dataset(schema, tuple(out), np.array(cols[-2], dtype=object),
                   np.array(cols[-1], dtype=object))
