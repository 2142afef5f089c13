"""Confusion matrices and macro-averaged classification metrics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], k: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


@dataclass
class MetricsReport:
    classes: list[str]
    confusion: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: dict[str, dict]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "n": self.total,
            "classes": list(self.classes),
            "per_class": self.per_class,
            "confusion": self.confusion.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + list(self.classes))
        for name, row in zip(self.classes, self.confusion.tolist()):
            w.writerow([name] + row)
        return buf.getvalue()

    def __eq__(self, other) -> bool:
        return isinstance(other, MetricsReport) and self.to_dict() == other.to_dict()


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def report_from_confusion(cm: np.ndarray, classes: Sequence[str]) -> MetricsReport:
    """Macro means run over classes with support > 0; the rest are marked absent.

    A present class that is never predicted gets precision 0.
    """
    cm = np.asarray(cm, dtype=np.int64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    tp = np.diag(cm)
    per_class = {}
    ps, rs, fs = [], [], []
    for i, name in enumerate(classes):
        if support[i] == 0:
            per_class[name] = {"support": 0, "present": False, "predicted": int(predicted[i])}
            continue
        p = _safe_div(tp[i], predicted[i])
        r = _safe_div(tp[i], support[i])
        f = _safe_div(2 * p * r, p + r)
        per_class[name] = {"support": int(support[i]), "present": True, "precision": p, "recall": r, "f1": f}
        ps.append(p)
        rs.append(r)
        fs.append(f)
    total = cm.sum()
    return MetricsReport(
        classes=list(classes),
        confusion=cm,
        accuracy=_safe_div(float(tp.sum()), float(total)),
        macro_precision=float(np.mean(ps)) if ps else 0.0,
        macro_recall=float(np.mean(rs)) if rs else 0.0,
        macro_f1=float(np.mean(fs)) if fs else 0.0,
        per_class=per_class,
    )


def compute_report(y_true: Sequence[int], y_pred: Sequence[int], classes: Sequence[str]) -> MetricsReport:
    return report_from_confusion(confusion_matrix(y_true, y_pred, len(classes)), classes)
