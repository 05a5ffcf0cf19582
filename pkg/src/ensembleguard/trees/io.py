"""Versioned text persistence for tree models.

Layout::

    ensembleguard-model v1
    type = boosted            # cart | bagging | boosted
    key = value               # parameters, one per line
    ...
    tree <tag> nodes=<count>
    N <feature> <threshold> <v1> <v2> ...   # internal node, pre-order
    L <v1> <v2> ...                         # leaf
    ...

Floats are written with ``repr`` so a load reproduces every bit, and the same
model always serializes to the same bytes.
"""
from __future__ import annotations

import numpy as np

from .boosting import BoostConfig, BoostedEnsemble, TargetStats, config_items
from .cart import BaggedEnsemble
from .tree import Tree

MAGIC = "ensembleguard-model v1"


def _floats(a) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(a))


def _parse_floats(s: str) -> np.ndarray:
    return np.array([float(t) for t in s.split()], dtype=np.float64)


def _tree_lines(tree: Tree, tag: str) -> list[str]:
    out = [f"tree {tag} nodes={tree.n_nodes}"]
    for i in range(tree.n_nodes):
        if tree.feature[i] >= 0:
            out.append(f"N {int(tree.feature[i])} {float(tree.threshold[i])!r} {_floats(tree.value[i])}")
        else:
            out.append(f"L {_floats(tree.value[i])}")
    return out


def _parse_tree(lines: list[str], n_features: int) -> Tree:
    m = len(lines)
    feat = np.full(m, -1, dtype=np.int64)
    thr = np.zeros(m)
    left = np.full(m, -1, dtype=np.int64)
    right = np.full(m, -1, dtype=np.int64)
    values = []
    width = None
    # pre-order: a node's left child is the next line; its right child
    # follows once the left subtree is complete
    pending = []
    for i, line in enumerate(lines):
        if pending:
            parent = pending.pop()
            if left[parent] < 0:
                left[parent] = i
                pending.append(parent)
            else:
                right[parent] = i
        elif i:
            raise ValueError("malformed tree: nodes after a complete tree")
        kind, _, rest = line.partition(" ")
        if kind == "N":
            f, t, rest = rest.split(" ", 2)
            feat[i] = int(f)
            thr[i] = float(t)
            pending.append(i)
        elif kind != "L":
            raise ValueError(f"bad node line {line!r}")
        v = _parse_floats(rest)
        width = v.size if width is None else width
        if v.size != width:
            raise ValueError("nodes of one tree disagree on value width")
        values.append(v)
    if pending:
        raise ValueError("malformed tree: truncated node list")
    value = np.stack(values)
    return Tree(feat, thr, left, right, value, n_features)


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps(model) -> str:
    lines = [MAGIC]
    if isinstance(model, Tree):
        lines += ["type = cart", f"n_features = {model.n_features}",
                  f"n_classes = {model.value.shape[1]}"]
        lines += _tree_lines(model, "0")
    elif isinstance(model, BaggedEnsemble):
        lines += ["type = bagging", f"n_features = {model.n_features}",
                  f"n_classes = {model.n_classes}", f"n_estimators = {model.n_estimators}",
                  f"seed = {model.seed}"]
        lines += [f"param.{k} = {_fmt(v)}" for k, v in sorted(model.params.items())]
        for t, tree in enumerate(model.trees):
            lines += _tree_lines(tree, str(t))
    elif isinstance(model, BoostedEnsemble):
        lines += ["type = boosted", f"flavor = {model.flavor}",
                  f"n_features = {model.n_features}", f"n_classes = {model.n_classes}",
                  f"learning_rate = {model.learning_rate!r}",
                  f"init_scores = {_floats(model.init_scores)}",
                  f"prior = {_floats(model.prior)}",
                  f"categorical = {' '.join(str(j) for j in model.categorical)}",
                  f"train_loss = {_floats(model.train_loss)}",
                  f"n_rounds_fitted = {len(model.rounds)}"]
        lines += [f"config.{k} = {_fmt(v)}" for k, v in sorted(config_items(model.config).items())]
        for ts in model.target_stats:
            lines.append(f"target_stats {ts.feature} codes={ts.codes.size}")
            for code, cnt, row in zip(ts.codes, ts.counts, ts.sums):
                lines.append(f"S {float(code)!r} {float(cnt)!r} {_floats(row)}")
        for r, trees in enumerate(model.rounds):
            for c, tree in enumerate(trees):
                lines += _tree_lines(tree, f"{r}:{c}")
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return "\n".join(lines) + "\n"


def _convert(value: str, like):
    if isinstance(like, bool):
        return value == "True"
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _param(value: str):
    if value == "None":
        return None
    if value in ("True", "False"):
        return value == "True"
    try:
        return int(value)
    except ValueError:
        return float(value)


def loads(text: str):
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise ValueError("not an ensembleguard model file")
    header = {}
    i = 1
    while i < len(lines) and " = " in lines[i]:
        key, _, value = lines[i].partition(" = ")
        header[key.strip()] = value.strip()
        i += 1
    n_features = int(header["n_features"])
    target_stats = []
    trees = []
    while i < len(lines):
        head = lines[i].split()
        if head[0] == "target_stats":
            j, k = int(head[1]), int(head[2].split("=")[1])
            rows = [_parse_floats(lines[i + 1 + q][2:]) for q in range(k)]
            arr = np.array(rows).reshape(k, -1)
            target_stats.append(TargetStats(j, arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2:].copy()))
            i += 1 + k
        elif head[0] == "tree":
            m = int(head[2].split("=")[1])
            trees.append(_parse_tree(lines[i + 1:i + 1 + m], n_features))
            i += 1 + m
        else:
            raise ValueError(f"unexpected line {lines[i]!r}")
    kind = header["type"]
    if kind == "cart":
        return trees[0]
    if kind == "bagging":
        params = {k[6:]: _param(v) for k, v in header.items() if k.startswith("param.")}
        return BaggedEnsemble(trees, int(header["n_estimators"]), int(header["seed"]),
                              int(header["n_classes"]), n_features, params)
    if kind == "boosted":
        base = BoostConfig()
        cfg = {k[7:]: _convert(v, getattr(base, k[7:]))
               for k, v in header.items() if k.startswith("config.")}
        C = int(header["n_classes"])
        n_rounds = int(header["n_rounds_fitted"])
        rounds = [trees[r * C:(r + 1) * C] for r in range(n_rounds)]
        cat = tuple(int(t) for t in header["categorical"].split())
        return BoostedEnsemble(header["flavor"], _parse_floats(header["init_scores"]), rounds,
                               float(header["learning_rate"]), BoostConfig(**cfg), n_features,
                               cat, target_stats, _parse_floats(header["prior"]),
                               _parse_floats(header["train_loss"]).tolist())
    raise ValueError(f"unknown model type {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
