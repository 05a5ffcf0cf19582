"""Operator-facing explanations: detected-attack percentages and decision
rules read off the distilled tree."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .meta import fidelity_report
from .trees.tree import Tree

__all__ = ["AttackRatioReport", "Rule", "RuleSet", "attack_ratios", "extract_rules",
           "fidelity_report", "meta_feature_names"]


@dataclass(frozen=True)
class AttackRatioReport:
    classes: tuple[str, ...]
    counts: tuple[int, ...]
    percentages: tuple[float, ...]
    total: int
    truth_counts: tuple[int, ...] | None = None

    def to_text(self, fmt: str = "plain") -> str:
        truth = self.truth_counts is not None
        head = ["Class", "Detected", "Percentage"] + (["True count"] if truth else [])
        rows = []
        for i, name in enumerate(self.classes):
            row = [name, str(self.counts[i]), f"{self.percentages[i]:.2f}%"]
            if truth:
                row.append(str(self.truth_counts[i]))
            rows.append(row)
        if fmt == "markdown":
            out = ["| " + " | ".join(head) + " |", "|" + "|".join(["---"] + ["---:"] * (len(head) - 1)) + "|"]
            out += ["| " + " | ".join(r) + " |" for r in rows]
        else:
            out = [" | ".join(head)] + [" | ".join(r) for r in rows]
        out.append(f"Total | {self.total}")
        return "\n".join(out) + "\n"


def attack_ratios(predictions, class_order, y_true=None) -> AttackRatioReport:
    """Count and share of each class among the predictions."""
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    if pred.size == 0:
        raise ValueError("nothing to report")
    names = tuple(getattr(class_order, "class_order", class_order))
    C = len(names)
    counts = np.bincount(pred, minlength=C)
    pct = 100.0 * counts / pred.size
    truth = None
    if y_true is not None:
        truth = tuple(int(v) for v in np.bincount(np.asarray(y_true, dtype=np.int64), minlength=C))
    return AttackRatioReport(names, tuple(int(v) for v in counts), tuple(float(v) for v in pct),
                             int(pred.size), truth)


@dataclass(frozen=True)
class Rule:
    conditions: tuple            # ((feature index, name, "<=" | ">", threshold), ...)
    class_index: int
    class_name: str
    distribution: tuple[float, ...]

    def matches(self, f: np.ndarray) -> bool:
        for j, _, op, thr in self.conditions:
            if (f[j] <= thr) != (op == "<="):
                return False
        return True

    def text(self) -> str:
        cond = " AND ".join(f"{name} {op} {thr:.6g}" for _, name, op, thr in self.conditions)
        dist = ", ".join(f"{p:.3f}" for p in self.distribution)
        return f"IF {cond or 'TRUE'} THEN {self.class_name} [{dist}]"


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]
    feature_names: tuple[str, ...]
    class_order: tuple[str, ...]

    def __len__(self):
        return len(self.rules)

    def fire(self, f) -> list[int]:
        f = np.asarray(f, dtype=np.float64)
        return [i for i, r in enumerate(self.rules) if r.matches(f)]

    def to_text(self, fmt: str = "plain") -> str:
        lines = [r.text() for r in self.rules]
        if fmt == "markdown":
            return "\n".join(f"{i + 1}. `{t}`" for i, t in enumerate(lines)) + "\n"
        return "\n".join(lines) + "\n"


def meta_feature_names(model_ids, class_order) -> tuple[str, ...]:
    return tuple(f"P(model={m}, class={c})" for m in model_ids for c in class_order)


def extract_rules(tree, model_ids, class_order) -> RuleSet:
    """One rule per root-to-leaf path, depth-first with the left branch first."""
    tree = getattr(tree, "tree", tree)
    if not isinstance(tree, Tree):
        raise TypeError("extract_rules needs a decision tree")
    names = meta_feature_names(model_ids, class_order)
    rules = []
    stack = [(0, ())]
    while stack:
        node, conds = stack.pop()
        f = int(tree.feature[node])
        if f < 0:
            dist = tree.value[node]
            c = int(np.argmax(dist))
            rules.append(Rule(conds, c, class_order[c], tuple(float(v) for v in dist)))
            continue
        name = names[f] if f < len(names) else f"x[{f}]"
        thr = float(tree.threshold[node])
        stack.append((int(tree.right[node]), conds + ((f, name, ">", thr),)))
        stack.append((int(tree.left[node]), conds + ((f, name, "<=", thr),)))
    return RuleSet(tuple(rules), names, tuple(class_order))
