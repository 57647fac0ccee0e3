"""Confusion matrices and classification reports for the binary SI outcome."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    def __post_init__(self):
        if min(self.tn, self.fp, self.fn, self.tp) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def predicted_by_actual(self) -> list[list[int]]:
        """Rows are predicted SI = 0, 1; columns are actual SI = 0, 1."""
        return [[self.tn, self.fn], [self.fp, self.tp]]


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    per_class: tuple[ClassMetrics, ClassMetrics]
    macro: tuple[float, float, float]
    weighted: tuple[float, float, float]
    accuracy: float
    zero_division: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        c = self.confusion
        out = {"accuracy": self.accuracy, "tn": c.tn, "fp": c.fp, "fn": c.fn, "tp": c.tp,
               "precision_macro": self.macro[0], "recall_macro": self.macro[1], "f1_macro": self.macro[2],
               "precision_weighted": self.weighted[0], "recall_weighted": self.weighted[1],
               "f1_weighted": self.weighted[2]}
        for k, m in enumerate(self.per_class):
            out.update({f"precision_{k}": m.precision, f"recall_{k}": m.recall, f"f1_{k}": m.f1,
                        f"support_{k}": m.support})
        out["zero_division"] = list(self.zero_division)
        return out


def confusion(pred, true) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {true.shape} labels")
    if pred.size == 0:
        raise ValueError("nothing to evaluate")
    return ConfusionMatrix(
        tn=int(np.sum((pred == 0) & (true == 0))), fp=int(np.sum((pred == 1) & (true == 0))),
        fn=int(np.sum((pred == 0) & (true == 1))), tp=int(np.sum((pred == 1) & (true == 1))))


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def report_from_confusion(c: ConfusionMatrix) -> EvalReport:
    flags: list[str] = []
    per = []
    # (true positives, predicted positives, actual positives) for class 0 then class 1
    for k, (tp, pp, ap) in enumerate([(c.tn, c.tn + c.fn, c.tn + c.fp), (c.tp, c.tp + c.fp, c.tp + c.fn)]):
        p = _ratio(tp, pp, f"precision_{k}", flags)
        r = _ratio(tp, ap, f"recall_{k}", flags)
        f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        per.append(ClassMetrics(p, r, f1, ap))
    trip = [(m.precision, m.recall, m.f1) for m in per]
    macro = tuple((trip[0][i] + trip[1][i]) / 2 for i in range(3))
    n = c.n
    weighted = tuple((trip[0][i] * per[0].support + trip[1][i] * per[1].support) / n for i in range(3))
    return EvalReport(c, tuple(per), macro, weighted, (c.tp + c.tn) / n, tuple(flags))


def evaluate(pred, true) -> EvalReport:
    return report_from_confusion(confusion(pred, true))


def macro_f1(pred, true) -> float:
    return evaluate(pred, true).macro[2]
