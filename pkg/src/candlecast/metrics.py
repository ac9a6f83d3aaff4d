"""Confusion counts and the derived evaluation statistics (Up is positive)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ContractError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ContractError(f"negative count in {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(truths: Sequence[int], predictions: Sequence[int]) -> ConfusionMatrix:
    if len(truths) != len(predictions):
        raise ContractError(f"{len(truths)} truths vs {len(predictions)} predictions")
    if len(truths) == 0:
        raise ContractError("confusion matrix needs at least one pair")
    tp = fp = tn = fn = 0
    for t, p in zip(truths, predictions):
        if p:
            if t:
                tp += 1
            else:
                fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def _ratio(num: float, den: float) -> float:
    # zero denominators give 0.0 for every statistic
    return num / den if den else 0.0


def sensitivity(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fn)


def specificity(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tn, cm.tn + cm.fp)


def accuracy(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp + cm.tn, cm.total)


def precision(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fp)


def mcc(cm: ConfusionMatrix) -> float:
    den = (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    return _ratio(cm.tp * cm.tn - cm.fp * cm.fn, math.sqrt(den))


def f_measure(cm: ConfusionMatrix) -> float:
    p, r = precision(cm), sensitivity(cm)
    return _ratio(2 * p * r, p + r)


def summary(cm: ConfusionMatrix) -> dict[str, float]:
    return {"sens": sensitivity(cm), "spec": specificity(cm), "acc": accuracy(cm), "mcc": mcc(cm), "f": f_measure(cm)}


def percent(x: float) -> str:
    """Report style: one decimal place."""
    return f"{100 * x:.1f}"
