"""Segmentation and binary-classification metrics from confusion counts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .mask_ops import as_mask

SEG_FIELDS = ("accuracy", "dice", "jaccard", "sensitivity", "specificity")
CLS_FIELDS = ("accuracy", "precision", "sensitivity", "specificity", "f1", "mcc")
AVERAGE_MODES = ("per-image", "pooled")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError(f"confusion counts must be non-negative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass(frozen=True)
class SegMetrics:
    accuracy: float
    dice: float
    jaccard: float
    sensitivity: float
    specificity: float
    # metrics whose value was 0/0 and reported as 1
    degenerate: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in SEG_FIELDS}


@dataclass(frozen=True)
class ClsMetrics:
    accuracy: float
    precision: float
    sensitivity: float
    specificity: float
    f1: float
    mcc: float
    degenerate: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in CLS_FIELDS}


def seg_confusion(pred, gt) -> ConfusionCounts:
    """Pixel-wise confusion counts of a predicted mask against the ground truth."""
    pred, gt = as_mask(pred), as_mask(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return ConfusionCounts(tp, fp, fn, pred.size - tp - fp - fn)


class _Divider:
    def __init__(self, exact: bool):
        self.exact = exact
        self.degenerate: list[str] = []

    def __call__(self, name: str, num: int, den: int):
        if den == 0:
            self.degenerate.append(name)
            return Fraction(1) if self.exact else 1.0
        return Fraction(num, den) if self.exact else num / den


def _require_total(c: ConfusionCounts) -> None:
    if c.total == 0:
        raise ValueError("confusion counts are all zero")


def seg_metrics(c: ConfusionCounts, exact: bool = False) -> SegMetrics:
    """Accuracy, Dice, Jaccard, sensitivity and specificity.

    A 0/0 ratio is reported as 1 and its name recorded in ``degenerate``.
    With ``exact=True`` the values are :class:`fractions.Fraction`.
    """
    _require_total(c)
    div = _Divider(exact)
    values = dict(
        accuracy=div("accuracy", c.tp + c.tn, c.total),
        dice=div("dice", 2 * c.tp, 2 * c.tp + c.fp + c.fn),
        jaccard=div("jaccard", c.tp, c.tp + c.fp + c.fn),
        sensitivity=div("sensitivity", c.tp, c.tp + c.fn),
        specificity=div("specificity", c.tn, c.tn + c.fp),
    )
    return SegMetrics(**values, degenerate=tuple(div.degenerate))


def cls_metrics(c: ConfusionCounts) -> ClsMetrics:
    """Accuracy, precision, sensitivity, specificity, F1 and Matthews correlation.

    MCC is 0 whenever one of the four marginal sums is 0.
    """
    _require_total(c)
    div = _Divider(exact=False)
    values = dict(
        accuracy=div("accuracy", c.tp + c.tn, c.total),
        precision=div("precision", c.tp, c.tp + c.fp),
        sensitivity=div("sensitivity", c.tp, c.tp + c.fn),
        specificity=div("specificity", c.tn, c.tn + c.fp),
        f1=div("f1", 2 * c.tp, 2 * c.tp + c.fp + c.fn),
    )
    marginals = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    # integer product, single rounding in the square root
    values["mcc"] = (c.tp * c.tn - c.fp * c.fn) / math.sqrt(marginals) if marginals else 0.0
    return ClsMetrics(**values, degenerate=tuple(div.degenerate))


def aggregate_seg(counts: Iterable[ConfusionCounts], average: str = "per-image") -> SegMetrics:
    """Combine per-image counts.

    ``per-image`` averages each metric over images; ``pooled`` sums the
    counts first and computes the metrics once.
    """
    if average not in AVERAGE_MODES:
        raise ValueError(f"average must be one of {AVERAGE_MODES}, got {average!r}")
    counts = list(counts)
    if not counts:
        raise ValueError("no images to aggregate")
    if average == "pooled":
        total = counts[0]
        for c in counts[1:]:
            total = total + c
        return seg_metrics(total)
    per_image = [seg_metrics(c) for c in counts]
    means = {k: math.fsum(getattr(m, k) for m in per_image) / len(per_image) for k in SEG_FIELDS}
    degenerate = sorted({d for m in per_image for d in m.degenerate}, key=SEG_FIELDS.index)
    return SegMetrics(**means, degenerate=tuple(degenerate))


def label_confusion(truth: Iterable[bool], predicted: Iterable[bool]) -> ConfusionCounts:
    """Sample-level confusion counts; ``True`` marks the positive class."""
    tp = fp = fn = tn = 0
    for t, p in zip(truth, predicted, strict=True):
        if t and p:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)
