"""Command-line entry point: ``ensembleguard {ingest,train,evaluate,explain,run-all}``.

Output directory layout::

    effective-config.txt      every setting the run used
    ingest/                   normalized dataset copy and its summary
    bundle/                   pipeline: members, encoders, meta, distilled tree
    reports/                  one table per base model, the meta-model and the tree
    explain/                  detected-attack percentages and decision rules
    manifest.json             config, artifact digests, stages (deterministic)
    timing.json               wall-clock seconds per stage

Exit status: 0 success, 1 internal failure, 2 user error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import PROFILES, ConfigError, RunConfig, load_config
from .evaluation import evaluate, render_report
from .explain import attack_ratios, extract_rules
from .ingest import (ParseError, SchemaError, UnknownLabelError, class_taxonomy, parse_dataset,
                     read_dataset, write_dataset)
from .meta import (BaseModelRegistry, Pipeline, build_meta_training_set, distill_to_tree,
                   fidelity_report, fit_member, load_pipeline, predict_dataset, save_pipeline,
                   train_meta)
from .preprocess import (PreprocessError, detect_outliers, fill_missing, impute_values, label_encode,
                         remove_outliers, split, stratified_subsample)

log = logging.getLogger("ensembleguard")

USER_ERRORS = (ConfigError, FileNotFoundError, ParseError, PreprocessError, SchemaError,
               UnknownLabelError)


class UserError(Exception):
    pass


class StageFailed(Exception):
    def __init__(self, stage, exc):
        self.stage, self.exc = stage, exc
        super().__init__(f"stage {stage} failed: {exc}")


# ------------------------------------------------------------------ helpers

def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _atomic_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    _write_json(tmp, obj)
    os.replace(tmp, path)


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def artifact_digests(out: Path) -> dict:
    skip = {"manifest.json", "timing.json"}
    files = {}
    for p in sorted(out.rglob("*")):
        rel = p.relative_to(out).as_posix()
        if p.is_file() and rel not in skip and not rel.endswith(".tmp"):
            files[rel] = sha256(p)
    return files


def write_manifest(cfg: RunConfig, stage: str, failed: str | None = None) -> None:
    out = Path(cfg.out)
    path = out / "manifest.json"
    stages = []
    if path.is_file():
        with open(path, encoding="utf-8") as fh:
            stages = json.load(fh).get("stages", [])
    if failed is None and stage not in stages:
        stages.append(stage)
    manifest = {
        "toolkit": "ensembleguard",
        "version": __version__,
        "config": dict(item for item in cfg.items() if item[0] != "out"),
        "stages": stages,
        "artifacts": artifact_digests(out),
    }
    if failed is not None:
        manifest["failed_stage"] = failed
        manifest["partial"] = True
    _atomic_json(path, manifest)


def record_timing(cfg: RunConfig, stage: str, seconds: float) -> None:
    path = Path(cfg.out) / "timing.json"
    timing = {}
    if path.is_file():
        with open(path, encoding="utf-8") as fh:
            timing = json.load(fh)
    timing[stage] = round(seconds, 3)
    _atomic_json(path, timing)


def _stage(cfg: RunConfig, name: str, fn, *args):
    t0 = time.perf_counter()
    log.info("stage %s", name)
    try:
        result = fn(cfg, *args)
    except (UserError, *USER_ERRORS):
        write_manifest(cfg, name, failed=name)
        raise
    except Exception as exc:
        write_manifest(cfg, name, failed=name)
        raise StageFailed(name, exc) from exc
    record_timing(cfg, name, time.perf_counter() - t0)
    write_manifest(cfg, name)
    return result


# ------------------------------------------------------------------- stages

def cmd_ingest(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    ds = parse_dataset(cfg.dataset_kind, cfg.paths)
    (out / "ingest").mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out / "ingest" / "dataset.csv")
    tax = class_taxonomy(cfg.dataset_kind)
    counts = ds.class_counts()
    summary = {
        "dataset_kind": cfg.dataset_kind,
        "paths": list(cfg.paths),
        "n": ds.n,
        "p": ds.schema.p,
        "categorical": [ds.schema.names[j] for j in ds.schema.categorical],
        "classes": {c: counts.get(c, 0) for c in tax.class_order},
        "class_order": list(tax.class_order),
        "missing_cells": int(sum(np.count_nonzero(c != c) if c.dtype.kind == "f" else
                                 sum(v is None for v in c) for c in ds.columns)),
    }
    _write_json(out / "ingest" / "summary.json", summary)
    lines = [f"dataset: {cfg.dataset_kind}", f"records: {ds.n}", f"features: {ds.schema.p}",
             f"classes: {len(tax.class_order)}"]
    lines += [f"  {c}: {summary['classes'][c]}" for c in tax.class_order]
    _write_text(out / "ingest" / "summary.txt", "\n".join(lines) + "\n")
    return summary


def _load_ingested(cfg: RunConfig):
    path = Path(cfg.out) / "ingest" / "dataset.csv"
    if not path.is_file():
        raise UserError(f"ingest outputs missing ({path}); run 'ensembleguard ingest' first")
    return read_dataset(path)


def _subsample(cfg, ds):
    if not cfg.subsample or ds.n <= cfg.subsample:
        return np.arange(ds.n)
    order = class_taxonomy(cfg.dataset_kind).class_order
    pos = {c: i for i, c in enumerate(order)}
    y = np.array([pos[c] for c in ds.labels.tolist()], dtype=np.int64)
    return stratified_subsample(y, cfg.subsample, cfg.seed)


def cmd_train(cfg: RunConfig) -> Pipeline:
    out = Path(cfg.out)
    bundle = out / "bundle"
    ds = _load_ingested(cfg)
    sub = _subsample(cfg, ds)
    ds = ds.take(sub)
    fills = impute_values(ds)
    ds_imp = fill_missing(ds, fills)
    report = detect_outliers(ds_imp, cfg.outlier_k)
    enc = label_encode(ds_imp)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sp = split(enc, cfg.split_ratio, cfg.seed, cfg.stratified)
    train = sp.train
    train_index = sp.train_index
    if cfg.remove_outliers:
        rep = detect_outliers(train, cfg.outlier_k)
        keep = np.setdiff1d(np.arange(train.n), rep.rows)
        train = remove_outliers(train, rep)
        train_index = train_index[keep]
    removed = sp.train.n - train.n
    log.info("train %d records, test %d records, %d features", train.n, sp.test.n, train.p)

    def fit(mid, data, params, seed):
        t0 = time.perf_counter()
        member = fit_member(mid, data, params, seed)
        log.debug("fit %s on %d records in %.1fs", mid, data.n, time.perf_counter() - t0)
        return member

    params = {m: cfg.params_for(m) for m in cfg.models}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mts = build_meta_training_set(cfg.models, train, cfg.folds, params=params, seed=cfg.seed,
                                      in_sample=cfg.in_sample, fit=fit, log=log.info)
    registry = BaseModelRegistry(tuple(cfg.models), train.n_classes, train.class_order)
    for mid in cfg.models:
        log.info("full fit: %s", mid)
        registry.register(fit(mid, train, params[mid], cfg.seed))
    meta = train_meta(mts.features, mts.labels, cfg.meta_config(), n_classes=train.n_classes)
    distilled = distill_to_tree(meta, mts.features, cfg.distill_depth, seed=cfg.seed)
    log.info("distilled tree: %d leaves, fidelity %.4f", distilled.tree.n_leaves, distilled.fidelity)
    info = {"n_train": train.n, "n_test": sp.test.n, "outliers_removed": removed,
            "distill_fidelity": distilled.fidelity, "meta_features": registry.feature_names()}
    pipe = Pipeline(ds.schema, fills, enc.encoders, enc.class_order, registry, meta, distilled, info)
    save_pipeline(pipe, bundle)
    _write_json(bundle / "split.json", {
        "subsample": sub.tolist(), "train": train_index.tolist(), "test": sp.test_index.tolist(),
        "seed": cfg.seed, "ratio": cfg.split_ratio, "stratified": cfg.stratified})
    _write_json(bundle / "oof.json", {"folds": cfg.folds if not cfg.in_sample else 0,
                                      "fold_of": mts.fold_of.tolist()})
    _write_text(bundle / "outliers.txt", _outlier_summary(report, ds.schema.names))
    return pipe


def _outlier_summary(report, names) -> str:
    lines = [f"# k = {report.k!r}; flagged cells = {len(report)}; "
             f"records with a flagged cell = {report.flagged_records.size} of {report.n}"]
    feats, counts = np.unique(report.features, return_counts=True)
    lines += [f"{names[f]} {c}" for f, c in zip(feats.tolist(), counts.tolist())]
    return "\n".join(lines) + "\n"


def _evaluation_data(cfg: RunConfig, pipe: Pipeline, data_path=None):
    if data_path is not None:
        ds = parse_dataset(cfg.dataset_kind, [data_path])
    else:
        split_path = Path(cfg.out) / "bundle" / "split.json"
        if not split_path.is_file():
            raise UserError(f"no split record at {split_path}; run 'ensembleguard train' first")
        with open(split_path, encoding="utf-8") as fh:
            sp = json.load(fh)
        ds = _load_ingested(cfg).take(np.array(sp["subsample"], dtype=np.int64))
        ds = ds.take(np.array(sp["test"], dtype=np.int64))
    if ds.schema.names != pipe.schema.names or ds.schema.kinds != pipe.schema.kinds:
        raise UserError("test data schema does not match the trained bundle")
    if ds.n == 0:
        raise UserError("evaluation data is empty")
    return pipe.encode(ds)


def _load_bundle(cfg):
    bundle = Path(cfg.out) / "bundle"
    if not (bundle / "pipeline.json").is_file():
        raise UserError(f"no trained bundle at {bundle}; run 'ensembleguard train' first")
    return load_pipeline(bundle)


def cmd_evaluate(cfg: RunConfig, data_path=None) -> dict:
    pipe = _load_bundle(cfg)
    test = _evaluation_data(cfg, pipe, data_path)
    tax = class_taxonomy(cfg.dataset_kind)
    out = Path(cfg.out) / "reports"
    results = {}
    pred, _, feats = predict_dataset(pipe, test)

    def emit(model_id, y_pred, extra=None):
        rep = evaluate(test.labels, y_pred, pipe.class_order, display=tax.display,
                       dataset_kind=cfg.dataset_kind, model_id=model_id)
        text = render_report(rep, "plain")
        if extra:
            text += "".join(f"{k}: {v:.4f}\n" for k, v in sorted(extra.items()))
        _write_text(out / f"{model_id}.txt", text)
        _write_text(out / f"{model_id}.csv", render_report(rep, "csv"))
        _write_text(out / f"{model_id}.md", render_report(rep, "markdown"))
        results[model_id] = {"accuracy": rep.accuracy, "macro_f1": rep.macro[2],
                             "weighted_f1": rep.weighted[2], **(extra or {})}

    C = len(pipe.class_order)
    for m, mid in enumerate(pipe.registry.model_ids):
        emit(mid, np.argmax(feats[:, m * C:(m + 1) * C], axis=1))
    emit("meta", pred)
    if pipe.distilled is not None:
        tree_pred = pipe.distilled.predict(feats)
        emit("distilled", tree_pred, {"fidelity": fidelity_report(pipe.distilled, pipe.meta, feats),
                                      "distill_fidelity": pipe.distilled.fidelity})
    _write_json(out / "summary.json", {"n": test.n, "models": results})
    return results


def cmd_explain(cfg: RunConfig, data_path=None):
    pipe = _load_bundle(cfg)
    test = _evaluation_data(cfg, pipe, data_path)
    tax = class_taxonomy(cfg.dataset_kind)
    out = Path(cfg.out) / "explain"
    pred, _, _ = predict_dataset(pipe, test)
    names = [tax.display_name(c) for c in pipe.class_order]
    ratios = attack_ratios(pred, names, test.labels)
    _write_text(out / "attack_ratios.txt", ratios.to_text("plain"))
    _write_text(out / "attack_ratios.md", ratios.to_text("markdown"))
    if pipe.distilled is None:
        raise UserError("bundle has no distilled tree")
    rules = extract_rules(pipe.distilled, pipe.registry.model_ids, pipe.class_order)
    fid = fidelity_report(pipe.distilled, pipe.meta, pipe.meta_features(test.matrix))
    _write_text(out / "rules.txt", rules.to_text("plain") + f"# rules: {len(rules)}; fidelity on evaluated records: {fid:.4f}\n")
    _write_text(out / "rules.md", rules.to_text("markdown"))
    return ratios, rules


# ---------------------------------------------------------------------- CLI

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--profile", choices=PROFILES, help="defaults preset (desk by default)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--kind", dest="dataset_kind", help="dataset kind (NSL-KDD, UNSW-NB15, CIC-IDS-2017)")
    common.add_argument("--paths", nargs="+", help="input CSV file(s)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    parser = argparse.ArgumentParser(prog="ensembleguard", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="parse raw files into a normalized dataset")
    sub.add_parser("train", parents=[common], help="preprocess, fit base models, stack, distill")
    for name, text in (("evaluate", "per-model report tables"), ("explain", "attack ratios and rules")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--data", help="evaluate on this file instead of the held-out split")
    sub.add_parser("run-all", parents=[common], help="ingest, train, evaluate and explain")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.config is None and args.command in ("train", "evaluate", "explain"):
            # later stages default to the settings an earlier stage recorded
            saved = Path(args.out or RunConfig().out) / "effective-config.txt"
            if saved.is_file():
                args.config = str(saved)
        cfg = load_config(args.config, args.profile,
                          {"seed": args.seed, "out": args.out, "dataset_kind": args.dataset_kind,
                           "paths": args.paths})
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        _write_text(Path(cfg.out) / "effective-config.txt", cfg.to_text())
        data = getattr(args, "data", None)
        if args.command in ("ingest", "run-all"):
            _stage(cfg, "ingest", cmd_ingest)
        if args.command in ("train", "run-all"):
            _stage(cfg, "train", cmd_train)
        if args.command in ("evaluate", "run-all"):
            _stage(cfg, "evaluate", cmd_evaluate, data)
        if args.command in ("explain", "run-all"):
            _stage(cfg, "explain", cmd_explain, data)
    except (UserError, *USER_ERRORS) as exc:
        print(f"ensembleguard: error: {exc}", file=sys.stderr)
        return 2
    except StageFailed as exc:
        print(f"ensembleguard: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=exc.exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
