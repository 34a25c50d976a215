from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

CLASS_NAMES = ("healthy", "cancer")


@dataclass(frozen=True)
class Metrics:
    precision: tuple[float, float]
    recall: tuple[float, float]
    f1: tuple[float, float]
    support: tuple[int, int]
    accuracy: float

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))


def _ratio(num, den):
    return num / den if den else 0.0


def metrics_from_predictions(y_true, y_pred) -> Metrics:
    """Per-class precision/recall/F1 for classes 0 (healthy) and 1 (cancer); 0/0 counts as 0."""
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    if len(y_true) == 0:
        raise ValueError("empty evaluation set")
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    precision, recall, f1, support = [], [], [], []
    for c in (0, 1):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        p = _ratio(tp, int(np.sum(y_pred == c)))
        r = _ratio(tp, int(np.sum(y_true == c)))
        precision.append(p)
        recall.append(r)
        f1.append(_ratio(2 * p * r, p + r))
        support.append(int(np.sum(y_true == c)))
    return Metrics(tuple(precision), tuple(recall), tuple(f1), tuple(support), float(np.mean(y_true == y_pred)))


def metrics_from_confusion(tn, fp, fn, tp) -> Metrics:
    """Build metrics from a 2x2 confusion matrix with cancer as the positive class."""
    y_true = np.array([0] * (tn + fp) + [1] * (fn + tp))
    y_pred = np.array([0] * tn + [1] * fp + [0] * fn + [1] * tp)
    return metrics_from_predictions(y_true, y_pred)


def evaluate(model, X_test, y_test) -> Metrics:
    X_test = np.asarray(X_test)
    if len(X_test) == 0:
        raise ValueError("empty test set")
    return metrics_from_predictions(y_test, model.predict(X_test))


def write_metrics_report(path, rows) -> None:
    """``rows`` is an iterable of ``(model_name, Metrics)``; layout mirrors a per-class results table."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "metric", "healthy", "cancer", "macro_average"])
        for name, m in rows:
            writer.writerow([name, "accuracy", "", "", f"{m.accuracy:.4f}"])
            writer.writerow([name, "precision", f"{m.precision[0]:.4f}", f"{m.precision[1]:.4f}", f"{m.macro_precision:.4f}"])
            writer.writerow([name, "recall", f"{m.recall[0]:.4f}", f"{m.recall[1]:.4f}", f"{m.macro_recall:.4f}"])
            writer.writerow([name, "f1", f"{m.f1[0]:.4f}", f"{m.f1[1]:.4f}", f"{m.macro_f1:.4f}"])
