"""Dataset-level evaluation metrics and report serialization."""

from dataclasses import dataclass
import json
from typing import Optional

import numpy as np

from .errors import DomainError, ShapeError
from .losses import ccc

__all__ = [
    "EvalReport",
    "evaluate_regression",
    "evaluate_classification",
    "make_report",
    "format_vad_table",
]

REPORT_KEYS = ("ccc_v", "ccc_a", "ccc_d", "ccc_mean", "macro_f1", "accuracy")


@dataclass
class EvalReport:
    ccc_v: float
    ccc_a: float
    ccc_d: float
    ccc_mean: float
    macro_f1: float
    accuracy: float
    confusion: np.ndarray

    def as_dict(self, with_confusion=True) -> dict:
        d = {k: float(getattr(self, k)) for k in REPORT_KEYS}
        if with_confusion:
            d["confusion"] = self.confusion.tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        """Flat ``key=value`` lines (confusion matrix excluded)."""
        return "".join(f"{k}={getattr(self, k):.10f}\n" for k in REPORT_KEYS)


def evaluate_regression(pred, target):
    """Per-dimension CCC over the whole set and their mean."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ShapeError(f"expected matching (M, 3) arrays, got {pred.shape} and {target.shape}")
    if pred.shape[0] < 2:
        raise DomainError("regression metrics need at least 2 samples")
    v, a, d = (ccc(pred[:, i], target[:, i]) for i in range(3))
    return v, a, d, (v + a + d) / 3.0


def evaluate_classification(pred_labels, true_labels, n_classes: int):
    """Macro F1, accuracy and the (true x predicted) confusion matrix.

    Classes absent from both predictions and truth are left out of the macro
    average; a class with no true positives scores F1 = 0.
    """
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ShapeError("label arrays must be 1-D and equal length")
    for arr in (pred, true):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise IndexError(f"label outside [0, {n_classes})")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    present = (tp + fp + fn) > 0
    if not present.any():
        return 0.0, accuracy, confusion
    f1 = 2.0 * tp[present] / (2.0 * tp[present] + fp[present] + fn[present])
    return float(f1.mean()), accuracy, confusion


def make_report(vad_pred, vad_true, logits, true_regions, n_classes: Optional[int] = None) -> EvalReport:
    logits = np.asarray(logits)
    n_classes = logits.shape[1] if n_classes is None else n_classes
    v, a, d, mean = evaluate_regression(vad_pred, vad_true)
    f1, acc, conf = evaluate_classification(logits.argmax(axis=1), true_regions, n_classes)
    return EvalReport(v, a, d, mean, f1, acc, conf)


def format_vad_table(report: EvalReport) -> str:
    header = f"{'Valence':>10}{'Arousal':>10}{'Dominance':>11}{'Average':>10}"
    row = f"{report.ccc_v:>10.4f}{report.ccc_a:>10.4f}{report.ccc_d:>11.4f}{report.ccc_mean:>10.4f}"
    return header + "\n" + row
