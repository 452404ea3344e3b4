"""Pixel-wise confusion counts and the scores derived from them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imagecore import BinaryMask

__all__ = [
    "ConfusionCounts",
    "ScoreReport",
    "confusion",
    "mcc",
    "mcc_defined",
    "scores",
    "overlay",
    "TP_COLOR",
    "FN_COLOR",
    "FP_COLOR",
    "TN_COLOR",
]

TP_COLOR = (0, 255, 0)
FN_COLOR = (0, 0, 255)
FP_COLOR = (255, 0, 0)
TN_COLOR = (0, 0, 0)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value}")
            object.__setattr__(self, name, int(value))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ScoreReport:
    """MCC plus precision/recall/accuracy in percent.

    Scores whose denominator is zero are reported as 0 and named in
    ``undefined``.
    """

    mcc: float
    precision_pct: float
    recall_pct: float
    accuracy_pct: float
    undefined: frozenset = field(default_factory=frozenset)

    def is_defined(self, name: str) -> bool:
        return name not in self.undefined


def _check_pair(predicted: BinaryMask, truth: BinaryMask) -> None:
    if predicted.shape != truth.shape:
        raise ValueError(
            f"predicted mask shape {predicted.shape} does not match ground truth shape {truth.shape}"
        )


def confusion(predicted: BinaryMask, truth: BinaryMask) -> ConfusionCounts:
    _check_pair(predicted, truth)
    p = predicted.labels
    t = truth.labels
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


def _mcc(c: ConfusionCounts) -> tuple[float, bool]:
    # Python ints keep the products exact for any image size.
    product = (c.tp + c.fn) * (c.tp + c.fp) * (c.tn + c.fp) * (c.tn + c.fn)
    if product == 0:
        return 0.0, False
    numerator = c.tp * c.tn - c.fp * c.fn
    value = numerator / math.sqrt(product)
    return max(-1.0, min(1.0, value)), True


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    return _mcc(c)[0]


def mcc_defined(c: ConfusionCounts) -> bool:
    return _mcc(c)[1]


def _ratio_pct(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, False
    return num / den * 100.0, True


def scores(c: ConfusionCounts) -> ScoreReport:
    if c.total == 0:
        raise ValueError("cannot score an empty image (no pixels)")
    undefined = set()
    m, ok = _mcc(c)
    if not ok:
        undefined.add("mcc")
    precision, ok = _ratio_pct(c.tp, c.tp + c.fp)
    if not ok:
        undefined.add("precision")
    recall, ok = _ratio_pct(c.tp, c.tp + c.fn)
    if not ok:
        undefined.add("recall")
    accuracy = (c.tp + c.tn) / c.total * 100.0
    return ScoreReport(m, precision, recall, accuracy, frozenset(undefined))


def overlay(predicted: BinaryMask, truth: BinaryMask) -> np.ndarray:
    """RGB comparison image: TP green, FN blue, FP red, TN black."""
    _check_pair(predicted, truth)
    p = predicted.labels
    t = truth.labels
    rgb = np.zeros(p.shape + (3,), dtype=np.uint8)
    rgb[p & t] = TP_COLOR
    rgb[~p & t] = FN_COLOR
    rgb[p & ~t] = FP_COLOR
    return rgb
