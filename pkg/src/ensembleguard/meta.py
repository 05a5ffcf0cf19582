"""Stacking layer: base-model registry, out-of-fold meta-features, the
neural meta-model, and its distillation into a decision tree.

Meta-features are the base models' class distributions concatenated in
registry order, so a registry of M models over C classes gives vectors of
length M*C whose C-blocks each sum to one.
"""
from __future__ import annotations

import ast
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import recurrent as rnn
from .ingest import FeatureSchema, RawRecord, dataset_from_records
from .preprocess import (EncodedDataset, Standardizer, apply_encoding, fill_missing,
                         fit_standardizer)
from .trees import BoostConfig, train_bagging, train_boosted, train_cart
from .trees import io as tree_io
from .trees.tree import Tree
from .weights import load_arrays, save_arrays

TREE_MODELS = ("cart", "bagging", "gbm", "lightgbm", "xgb", "catboost")
RECURRENT_MODELS = ("lstm", "gru")
MODEL_IDS = TREE_MODELS + RECURRENT_MODELS
DEFAULT_MODELS = ("bagging", "gbm", "lightgbm", "xgb", "catboost", "lstm", "gru")
FLAVOR_OF = {"gbm": "gbm", "lightgbm": "light", "xgb": "xgb", "catboost": "cat"}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage {stage}: {cause}")


# ------------------------------------------------------------------ members

@dataclass(eq=False)
class Member:
    """A trained base model behind a uniform ``predict_proba(X)``.

    Recurrent members carry the standardizer fitted on their own training
    data and apply it to the encoded matrix they receive.
    """
    model_id: str
    model: object
    standardizer: Standardizer | None = None

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if self.model_id in RECURRENT_MODELS:
            return rnn.predict_proba(self.model, self.standardizer.transform(X))
        if isinstance(self.model, Tree):
            return self.model.predict_proba(X)
        return self.model.predict_proba(X)


def _pick(params: dict, cls) -> dict:
    names = cls.__dataclass_fields__
    return {k: v for k, v in params.items() if k in names}


def fit_member(model_id: str, train: EncodedDataset, params: dict | None = None,
               seed: int = 0) -> Member:
    params = dict(params or {})
    if model_id == "cart":
        return Member(model_id, train_cart(train, max_depth=params.get("max_depth"),
                                           min_samples_leaf=params.get("min_samples_leaf", 1)))
    if model_id == "bagging":
        return Member(model_id, train_bagging(
            train, n_estimators=params.get("n_estimators", 1000), seed=seed,
            max_depth=params.get("max_depth"), min_samples_leaf=params.get("min_samples_leaf", 1)))
    if model_id in FLAVOR_OF:
        cfg = BoostConfig(**{**_pick(params, BoostConfig), "seed": seed})
        return Member(model_id, train_boosted(train, config=cfg, flavor=FLAVOR_OF[model_id]))
    if model_id in RECURRENT_MODELS:
        st = fit_standardizer(train, include_categorical=True)
        cfg = rnn.RecurrentConfig(**{**_pick(params, rnn.RecurrentConfig),
                                     "kind": model_id.upper(), "seed": seed})
        model, _ = rnn.train_recurrent(st.transform(train.matrix), cfg, y=train.labels,
                                       n_classes=train.n_classes)
        return Member(model_id, model, st)
    raise ValueError(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}")


@dataclass(eq=False)
class BaseModelRegistry:
    model_ids: tuple[str, ...]
    n_classes: int
    class_order: tuple[str, ...] = ()
    members: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.model_ids)) != len(self.model_ids):
            raise ValueError("model ids must be unique")
        if not self.model_ids:
            raise ValueError("registry needs at least one model")

    @property
    def M(self) -> int:
        return len(self.model_ids)

    @property
    def width(self) -> int:
        return self.M * self.n_classes

    def register(self, member: Member) -> None:
        if member.model_id not in self.model_ids:
            raise ValueError(f"{member.model_id!r} is not in the registry")
        self.members[member.model_id] = member

    def feature_names(self) -> list[str]:
        classes = self.class_order or tuple(str(c) for c in range(self.n_classes))
        return [f"P(model={m}, class={c})" for m in self.model_ids for c in classes]


def stack_predictions(registry: BaseModelRegistry, X: np.ndarray) -> np.ndarray:
    """Concatenate member distributions in registry order: (n, M*C), or (M*C,) for one record."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    blocks = []
    for mid in registry.model_ids:
        member = registry.members.get(mid)
        if member is None:
            raise ValueError(f"model {mid!r} is not trained")
        P = np.asarray(member.predict_proba(X2), dtype=np.float64)
        if P.shape != (X2.shape[0], registry.n_classes):
            raise ValueError(f"model {mid!r} returned shape {P.shape}")
        blocks.append(P)
    F = np.concatenate(blocks, axis=1) if blocks else np.zeros((X2.shape[0], 0))
    return F[0] if single else F


# ---------------------------------------------------------- out-of-fold set

@dataclass(eq=False)
class MetaTrainingSet:
    features: np.ndarray
    labels: np.ndarray
    fold_of: np.ndarray            # fold index of every record, -1 for in-sample
    trained_on: list               # per fold: indices the fold's models were fit on
    model_ids: tuple[str, ...]


def stratified_folds(labels: np.ndarray, folds: int, seed: int, n_classes: int) -> np.ndarray:
    """Assign each record a fold so every class is spread round-robin."""
    rng = np.random.default_rng([seed, 99])
    fold_of = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for c in range(n_classes):
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return fold_of


def build_meta_training_set(model_ids, train: EncodedDataset, folds: int = 5, *, params=None,
                            seed: int = 0, in_sample: bool = False, fit=fit_member,
                            log=None) -> MetaTrainingSet:
    """Out-of-fold meta-features: record i's vector comes only from models fit
    on folds that exclude i.  ``in_sample=True`` fits once on all records.
    """
    model_ids = tuple(model_ids)
    params = params or {}
    n, C = train.n, train.n_classes
    F = np.zeros((n, len(model_ids) * C))
    if in_sample:
        reg = BaseModelRegistry(model_ids, C, train.class_order)
        for mid in model_ids:
            reg.register(fit(mid, train, params.get(mid), seed))
        return MetaTrainingSet(stack_predictions(reg, train.matrix), train.labels.copy(),
                               np.full(n, -1), [np.arange(n)], model_ids)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if n < folds:
        raise ValueError(f"{n} records cannot fill {folds} folds")
    fold_of = stratified_folds(train.labels, folds, seed, C)
    trained_on = []
    present = set(np.unique(train.labels).tolist())
    for f in range(folds):
        tr = np.nonzero(fold_of != f)[0]
        te = np.nonzero(fold_of == f)[0]
        trained_on.append(tr)
        missing = present - set(np.unique(train.labels[tr]).tolist())
        if missing:
            warnings.warn(f"fold {f}: training side lacks class(es) "
                          f"{sorted(train.class_order[c] for c in missing)}", stacklevel=2)
        sub = train.take(tr)
        reg = BaseModelRegistry(model_ids, C, train.class_order)
        for mid in model_ids:
            if log:
                log(f"fold {f + 1}/{folds}: {mid}")
            reg.register(fit(mid, sub, params.get(mid), seed))
        F[te] = stack_predictions(reg, train.matrix[te])
    return MetaTrainingSet(F, train.labels.copy(), fold_of, trained_on, model_ids)


# --------------------------------------------------------------- meta-model

@dataclass
class MetaConfig:
    hidden: int = 64
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0

    def validate(self):
        if self.hidden < 1:
            raise ValueError("meta hidden width must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        return self


@dataclass(eq=False)
class MetaModel:
    """One hidden ReLU layer and a softmax head over meta-feature vectors."""
    config: MetaConfig
    params: dict          # W1 (d, H), b1 (H,), W2 (H, C), b2 (C,)
    losses: list = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return int(self.params["W2"].shape[1])

    @property
    def n_inputs(self) -> int:
        return int(self.params["W1"].shape[0])

    def predict_proba(self, F: np.ndarray) -> np.ndarray:
        F = np.asarray(F, dtype=np.float64)
        single = F.ndim == 1
        F2 = F[None, :] if single else F
        if F2.shape[1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} meta-features, got {F2.shape[1]}")
        P = _mlp(self.params, F2)[0]
        return P[0] if single else P

    def predict(self, F: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(F), axis=-1)


def init_meta(config: MetaConfig, d: int, C: int) -> dict:
    rng = np.random.default_rng(config.seed)
    s1, s2 = 1.0 / np.sqrt(d), 1.0 / np.sqrt(config.hidden)
    return {"W1": rng.uniform(-s1, s1, (d, config.hidden)), "b1": np.zeros(config.hidden),
            "W2": rng.uniform(-s2, s2, (config.hidden, C)), "b2": np.zeros(C)}


def _mlp(params, F):
    a = F @ params["W1"] + params["b1"]
    h = np.maximum(a, 0.0)
    z = h @ params["W2"] + params["b2"]
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True), (a, h)


def meta_loss(params, F, y) -> float:
    P, _ = _mlp(params, np.asarray(F, dtype=np.float64))
    return float(-np.mean(np.log(np.maximum(P[np.arange(y.size), y], 1e-300))))


def _meta_grads(params, F, y):
    P, (a, h) = _mlp(params, F)
    B = y.size
    loss = -np.mean(np.log(np.maximum(P[np.arange(B), y], 1e-300)))
    dz = P
    dz[np.arange(B), y] -= 1.0
    dz /= B
    dh = dz @ params["W2"].T
    da = dh * (a > 0)
    return float(loss), {"W1": F.T @ da, "b1": da.sum(axis=0), "W2": h.T @ dz, "b2": dz.sum(axis=0)}


def train_meta(features, labels, config: MetaConfig | None = None, *, n_classes=None,
               init: dict | None = None) -> MetaModel:
    """Adam on cross-entropy with per-epoch shuffles from substream (seed, epoch)."""
    config = (config or MetaConfig()).validate()
    F = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    C = n_classes if n_classes is not None else int(y.max()) + 1
    n, d = F.shape
    if n < 1:
        raise ValueError("no meta training records")
    params = {k: v.copy() for k, v in (init or init_meta(config, d, C)).items()}
    if params["W1"].shape[0] != d:
        raise ValueError(f"meta-feature width {d} does not match initial weights")
    opt = rnn.Adam(params, config.learning_rate)
    model = MetaModel(config, params, [meta_loss(params, F, y)])
    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, epoch])
        perm = rng.permutation(n)
        total = 0.0
        for bi, s in enumerate(range(0, n, config.batch_size)):
            idx = perm[s:s + config.batch_size]
            loss, grads = _meta_grads(params, F[idx], y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite meta loss at epoch {epoch}, batch {bi}")
            total += loss * idx.size
            opt.step(params, grads)
        model.losses.append(total / n)
    return model


# ------------------------------------------------------------- distillation

@dataclass(eq=False)
class DistilledTree:
    tree: Tree
    max_depth: int | None
    fidelity: float
    fit_index: np.ndarray
    holdout_index: np.ndarray
    fit_fidelity: float = 1.0

    def predict_proba(self, F: np.ndarray) -> np.ndarray:
        return self.tree.predict_proba(np.atleast_2d(np.asarray(F, dtype=np.float64)))

    def predict(self, F: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(F), axis=1)


def fidelity_report(tree, meta, features) -> float:
    """Share of inputs where the surrogate's argmax equals the meta-model's."""
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if F.shape[0] == 0:
        raise ValueError("fidelity needs at least one input")
    t = tree.predict(F) if hasattr(tree, "predict") else np.argmax(tree.predict_proba(F), axis=1)
    m = meta.predict(F) if hasattr(meta, "predict") else np.argmax(meta.predict_proba(F), axis=1)
    return float(np.mean(t == m))


def distill_to_tree(meta: MetaModel, features, max_depth: int | None = 6, *, seed: int = 0,
                    holdout: float = 0.2) -> DistilledTree:
    """Fit a CART on the meta-model's argmax labels over 80% of ``features``;
    fidelity is measured on the remaining 20%.
    """
    F = np.ascontiguousarray(features, dtype=np.float64)
    n = F.shape[0]
    if n < 1:
        raise ValueError("distillation needs at least one record")
    target = meta.predict(F)
    perm = np.random.default_rng([seed, 2718]).permutation(n)
    n_hold = int(np.floor(holdout * n)) if n > 1 else 0
    hold, fit = np.sort(perm[:n_hold]), np.sort(perm[n_hold:])
    tree = train_cart(F[fit], target[fit], max_depth=max_depth, n_classes=meta.n_classes)
    fit_fid = float(np.mean(np.argmax(tree.predict_proba(F[fit]), axis=1) == target[fit]))
    if hold.size:
        fid = float(np.mean(np.argmax(tree.predict_proba(F[hold]), axis=1) == target[hold]))
    else:
        fid = fit_fid
    return DistilledTree(tree, max_depth, fid, fit, hold, fit_fid)


# ----------------------------------------------------------------- pipeline

@dataclass(eq=False)
class Pipeline:
    schema: FeatureSchema
    fills: dict
    encoders: dict
    class_order: tuple[str, ...]
    registry: BaseModelRegistry
    meta: MetaModel
    distilled: DistilledTree | None = None
    info: dict = field(default_factory=dict)

    def encode(self, data) -> EncodedDataset:
        if isinstance(data, RawRecord):
            data = dataset_from_records(self.schema, [data])
        if data.schema.names != self.schema.names or data.schema.kinds != self.schema.kinds:
            raise ValueError("data schema does not match the pipeline's")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return apply_encoding(self.encoders, fill_missing(data, self.fills), self.class_order)

    def meta_features(self, X: np.ndarray) -> np.ndarray:
        return stack_predictions(self.registry, X)


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def predict_full(pipeline: Pipeline, record):
    """Raw record to ``(class index, distribution, meta-features)``."""
    if not isinstance(record, RawRecord):
        record = RawRecord(tuple(record), pipeline.class_order[0])
    elif record.label not in pipeline.class_order:
        record = RawRecord(record.values, pipeline.class_order[0])
    enc = _stage("encode", pipeline.encode, record)
    feats = _stage("base-models", pipeline.meta_features, enc.matrix[0])
    dist = _stage("meta", pipeline.meta.predict_proba, feats)
    return int(np.argmax(dist)), dist, feats


def predict_dataset(pipeline: Pipeline, data) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch version of :func:`predict_full` over a Dataset or EncodedDataset."""
    enc = data if isinstance(data, EncodedDataset) else _stage("encode", pipeline.encode, data)
    feats = _stage("base-models", pipeline.meta_features, enc.matrix)
    dist = _stage("meta", pipeline.meta.predict_proba, feats)
    return np.argmax(dist, axis=1), dist, feats


# -------------------------------------------------------------- persistence

def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def member_filename(model_id: str) -> str:
    return f"{model_id}.weights" if model_id in RECURRENT_MODELS else f"{model_id}.model"


def save_member(member: Member, directory) -> list[str]:
    directory = Path(directory)
    name = member_filename(member.model_id)
    if member.model_id in RECURRENT_MODELS:
        rnn.save_recurrent(member.model, directory / name)
        st = member.standardizer
        save_arrays(directory / f"{member.model_id}.std",
                    {"model": member.model_id},
                    {"mean": st.mean, "scale": st.scale, "columns": st.columns.astype(np.float64)})
        return [name, f"{member.model_id}.std"]
    tree_io.save_model(member.model, directory / name)
    return [name]


def load_member(model_id: str, directory) -> Member:
    directory = Path(directory)
    if model_id in RECURRENT_MODELS:
        model = rnn.load_recurrent(directory / member_filename(model_id))
        _, a = load_arrays(directory / f"{model_id}.std")
        return Member(model_id, model, Standardizer(a["mean"], a["scale"], a["columns"] > 0.5))
    return Member(model_id, tree_io.load_model(directory / member_filename(model_id)))


def save_pipeline(pipeline: Pipeline, directory) -> list[str]:
    """Write every pipeline artifact; returns the relative file names written."""
    directory = Path(directory)
    (directory / "members").mkdir(parents=True, exist_ok=True)
    files = []
    for mid in pipeline.registry.model_ids:
        files += [f"members/{f}" for f in save_member(pipeline.registry.members[mid], directory / "members")]
    meta = pipeline.meta
    save_arrays(directory / "meta.weights",
                {f"config.{k}": repr(v) for k, v in sorted(asdict(meta.config).items())},
                {**{k: meta.params[k] for k in ("W1", "b1", "W2", "b2")},
                 "losses": np.asarray(meta.losses, dtype=np.float64)})
    files.append("meta.weights")
    if pipeline.distilled is not None:
        d = pipeline.distilled
        tree_io.save_model(d.tree, directory / "distilled.model")
        _dump_json({"max_depth": d.max_depth, "fidelity": d.fidelity, "fit_fidelity": d.fit_fidelity,
                    "fit_index": d.fit_index.tolist(), "holdout_index": d.holdout_index.tolist()},
                   directory / "distilled.json")
        files += ["distilled.model", "distilled.json"]
    s = pipeline.schema
    _dump_json({
        "format": "ensembleguard-pipeline v1",
        "schema": {"features": [list(f) for f in s.features], "label_column": s.label_column,
                   "dataset_kind": s.dataset_kind},
        "fills": pipeline.fills,
        "encoders": {k: sorted(v.items(), key=lambda kv: kv[1]) for k, v in pipeline.encoders.items()},
        "class_order": list(pipeline.class_order),
        "registry": list(pipeline.registry.model_ids),
        "info": pipeline.info,
    }, directory / "pipeline.json")
    files.append("pipeline.json")
    return sorted(files)


def load_pipeline(directory) -> Pipeline:
    directory = Path(directory)
    if not (directory / "pipeline.json").is_file():
        raise FileNotFoundError(f"no pipeline bundle in {directory}")
    spec = _load_json(directory / "pipeline.json")
    sc = spec["schema"]
    schema = FeatureSchema(tuple(tuple(f) for f in sc["features"]), sc["label_column"], sc["dataset_kind"])
    class_order = tuple(spec["class_order"])
    reg = BaseModelRegistry(tuple(spec["registry"]), len(class_order), class_order)
    for mid in reg.model_ids:
        reg.register(load_member(mid, directory / "members"))
    header, arrays = load_arrays(directory / "meta.weights")
    cfg = MetaConfig(**{k[7:]: ast.literal_eval(v) for k, v in header.items() if k.startswith("config.")})
    meta = MetaModel(cfg, {k: arrays[k].copy() for k in ("W1", "b1", "W2", "b2")},
                     arrays["losses"].tolist())
    distilled = None
    if (directory / "distilled.model").is_file():
        d = _load_json(directory / "distilled.json")
        distilled = DistilledTree(tree_io.load_model(directory / "distilled.model"), d["max_depth"],
                                  d["fidelity"], np.array(d["fit_index"], dtype=np.int64),
                                  np.array(d["holdout_index"], dtype=np.int64), d["fit_fidelity"])
    encoders = {k: {v: c for v, c in pairs} for k, pairs in spec["encoders"].items()}
    return Pipeline(schema, spec["fills"], encoders, class_order, reg, meta, distilled, spec["info"])
