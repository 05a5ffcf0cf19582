"""Confusion-matrix metrics and per-class report tables."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PLAIN_HEADER = ("Different Classes", "Precision Results", "Recall Score", "F1-score Results", "Support")
FORMATS = ("plain", "csv", "markdown")


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray            # (C, C) int64; rows true, columns predicted
    class_order: tuple[str, ...] = ()

    @property
    def n_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    classes: list
    accuracy: float | None
    macro: tuple[float, float, float] | None = None
    weighted: tuple[float, float, float] | None = None
    dataset_kind: str = ""
    model_id: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def macro_f1(self) -> float:
        return self.macro[2]


def confusion(y_true, y_pred, C: int, class_order=()) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    for name, a in (("y_true", y_true), ("y_pred", y_pred)):
        if a.size and (a.min() < 0 or a.max() >= C):
            raise ValueError(f"{name} has a class index outside [0, {C})")
    counts = np.bincount(y_true * C + y_pred, minlength=C * C).reshape(C, C)
    return ConfusionMatrix(counts.astype(np.int64), tuple(class_order))


def _ratio(a, b):
    return a / b if b > 0 else 0.0


def class_metrics(matrix: ConfusionMatrix, names=None) -> list[ClassMetrics]:
    """Per-class precision, recall, F1 and support; 0/0 counts as 0."""
    M = matrix.counts
    names = list(names or matrix.class_order or [str(c) for c in range(M.shape[0])])
    out = []
    for c in range(M.shape[0]):
        tp = int(M[c, c])
        pred = int(M[:, c].sum())
        true = int(M[c, :].sum())
        p = _ratio(tp, pred)
        r = _ratio(tp, true)
        f = _ratio(2 * p * r, p + r)
        out.append(ClassMetrics(names[c], float(p), float(r), float(f), true))
    return out


def accuracy(matrix: ConfusionMatrix) -> float:
    total = matrix.total
    if total == 0:
        raise ValueError("accuracy of an empty confusion matrix")
    return float(np.trace(matrix.counts)) / total


def averages(metrics: list[ClassMetrics]):
    """(macro, support-weighted) triples of (precision, recall, f1)."""
    if not metrics:
        return (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)
    P = np.array([[m.precision, m.recall, m.f1] for m in metrics])
    s = np.array([m.support for m in metrics], dtype=np.float64)
    macro = tuple(float(v) for v in P.mean(axis=0))
    weighted = tuple(float(v) for v in (P * s[:, None]).sum(axis=0) / s.sum()) if s.sum() else (0.0, 0.0, 0.0)
    return macro, weighted


def evaluate(y_true, y_pred, class_order, *, display=None, dataset_kind="", model_id="") -> EvalReport:
    cm = confusion(y_true, y_pred, len(class_order), class_order)
    names = [display.get(c, c) for c in class_order] if display else list(class_order)
    metrics = class_metrics(cm, names)
    macro, weighted = averages(metrics)
    acc = accuracy(cm) if cm.total else None
    return EvalReport(metrics, acc, macro, weighted, dataset_kind, model_id,
                      {"confusion": cm.counts.tolist()})


def macro_f1(y_true, y_pred, C: int) -> float:
    return averages(class_metrics(confusion(y_true, y_pred, C)))[0][2]


def _rows(report: EvalReport, attacks_only: bool):
    classes = report.classes[1:] if attacks_only else report.classes
    rows = [[m.name, f"{m.precision:.3f}", f"{m.recall:.3f}", f"{m.f1:.3f}", str(m.support)]
            for m in classes]
    tail = []
    if report.accuracy is not None:
        tail.append(["Accuracy", "", "", f"{report.accuracy:.3f}", str(sum(m.support for m in report.classes))])
    for label, avg in (("Macro average", report.macro), ("Weighted average", report.weighted)):
        if avg is not None and report.classes:
            tail.append([label, f"{avg[0]:.3f}", f"{avg[1]:.3f}", f"{avg[2]:.3f}",
                         str(sum(m.support for m in report.classes))])
    return rows, tail


def render_report(report: EvalReport, fmt: str = "plain", *, attacks_only: bool = False) -> str:
    """Text table: one row per class in taxonomy order, then accuracy and averages.

    ``attacks_only`` drops the first (benign) class row, which is how the
    published tables list results.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    rows, tail = _rows(report, attacks_only)
    lines = []
    if fmt == "plain":
        lines.append(" | ".join(PLAIN_HEADER))
        lines += [" | ".join(r) for r in rows + tail]
    elif fmt == "csv":
        lines.append(",".join(PLAIN_HEADER))
        lines += [",".join(_csv_cell(c) for c in r) for r in rows + tail]
    else:
        lines.append("| " + " | ".join(PLAIN_HEADER) + " |")
        lines.append("|" + "|".join(["---"] + ["---:"] * 4) + "|")
        lines += ["| " + " | ".join(r) + " |" for r in rows + tail]
    return "\n".join(lines) + "\n"


def _csv_cell(s: str) -> str:
    return f'"{s}"' if ("," in s or '"' in s) else s
