"""Classification metrics: confusion matrices, per-class and weighted
precision/recall/F1, and the empty vs. non-empty collapse.

Zero-denominator conventions follow the common ML-library behavior:
precision of a never-predicted class is 0, recall of an absent class is 0
(reported with support 0, weight 0 in the averages).  Weighted recall equals
accuracy identically, since the weights are the true-class supports.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from io import StringIO

import numpy as np

from .errors import EmptyMatrix, LengthMismatch
from .ingest import EMPTY_CLASS, LabelSpace


@dataclass
class ConfusionMatrix:
    label_space: LabelSpace
    counts: np.ndarray  # (g, g) int64; rows = true, columns = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricReport:
    accuracy: float
    per_class: dict[str, ClassMetrics]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    def value(self, metric: str) -> float:
        if metric == "accuracy":
            return self.accuracy
        return {
            "precision": self.weighted_precision,
            "recall": self.weighted_recall,
            "f1": self.weighted_f1,
        }[metric]


def confusion(true_labels, predicted_labels, label_space: LabelSpace) -> ConfusionMatrix:
    if len(true_labels) != len(predicted_labels):
        raise LengthMismatch(
            f"{len(true_labels)} true labels vs {len(predicted_labels)} predictions"
        )
    g = len(label_space)
    counts = np.zeros((g, g), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        counts[label_space.index(t), label_space.index(p)] += 1
    return ConfusionMatrix(label_space, counts)


def report(cm: ConfusionMatrix) -> MetricReport:
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix has no entries")
    diag = np.diag(counts).astype(np.float64)
    row_sums = counts.sum(axis=1).astype(np.float64)  # true-class supports
    col_sums = counts.sum(axis=0).astype(np.float64)

    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col_sums > 0, diag / col_sums, 0.0)
        recall = np.where(row_sums > 0, diag / row_sums, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / pr, 0.0)

    support = row_sums
    w_total = support.sum()
    per_class = {
        name: ClassMetrics(float(precision[k]), float(recall[k]), float(f1[k]), int(support[k]))
        for k, name in enumerate(cm.label_space.classes)
    }
    accuracy = float(diag.sum() / total)
    # sum_k n_k * (d_k / n_k) / N collapses to accuracy; computing it that
    # way keeps the identity exact instead of within an ulp
    return MetricReport(
        accuracy=accuracy,
        per_class=per_class,
        weighted_precision=float((support * precision).sum() / w_total),
        weighted_recall=accuracy,
        weighted_f1=float((support * f1).sum() / w_total),
    )


def collapse_empty(cm: ConfusionMatrix) -> ConfusionMatrix:
    """2x2 matrix over {empty, non-empty}; preserves the total count."""
    e = cm.label_space.empty_index
    counts = cm.counts
    out = np.zeros((2, 2), dtype=np.int64)
    for t in range(counts.shape[0]):
        for p in range(counts.shape[1]):
            out[0 if t == e else 1, 0 if p == e else 1] += counts[t, p]
    return ConfusionMatrix(LabelSpace((EMPTY_CLASS, "non-empty")), out)


# --- exports ------------------------------------------------------------------


def report_to_csv(rep: MetricReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "precision", "recall", "f1", "support"])
        for name, m in rep.per_class.items():
            writer.writerow([name, repr(m.precision), repr(m.recall), repr(m.f1), m.support])
        writer.writerow(
            ["weighted", repr(rep.weighted_precision), repr(rep.weighted_recall), repr(rep.weighted_f1), ""]
        )
        writer.writerow(["accuracy", repr(rep.accuracy), "", "", ""])


def cm_to_csv(cm: ConfusionMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\predicted"] + list(cm.label_space.classes))
        for k, name in enumerate(cm.label_space.classes):
            writer.writerow([name] + [int(v) for v in cm.counts[k]])


def format_report(rep: MetricReport) -> str:
    """Human-readable metrics table."""
    out = StringIO()
    width = max(len(n) for n in rep.per_class) + 2
    out.write(f"{'class':<{width}}{'prec':>8}{'recall':>8}{'f1':>8}{'support':>9}\n")
    for name, m in rep.per_class.items():
        out.write(
            f"{name:<{width}}{m.precision:>8.3f}{m.recall:>8.3f}{m.f1:>8.3f}{m.support:>9d}\n"
        )
    out.write(
        f"{'weighted':<{width}}{rep.weighted_precision:>8.3f}{rep.weighted_recall:>8.3f}"
        f"{rep.weighted_f1:>8.3f}\n"
    )
    out.write(f"accuracy: {rep.accuracy:.4f}\n")
    return out.getvalue()


def format_cm(cm: ConfusionMatrix) -> str:
    names = cm.label_space.classes
    width = max(max(len(n) for n in names) + 2, 8)
    out = StringIO()
    out.write(" " * width + "".join(f"{n:>{width}}" for n in names) + "\n")
    for k, name in enumerate(names):
        out.write(f"{name:<{width}}" + "".join(f"{int(v):>{width}d}" for v in cm.counts[k]) + "\n")
    return out.getvalue()
