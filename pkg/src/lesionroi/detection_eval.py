"""
Single-lesion detection matching and precision / recall / mean-IoU reports.

Each image carries exactly one ground-truth box. Detections are ranked by
confidence (ties: larger area first, then smaller coordinates). The first
ranked detection whose IoU with the ground truth is strictly above the
threshold is the image's true positive; every other detection is a false
positive, including duplicates that also overlap the lesion.

Two false-negative conventions are supported:

``no-detection``
    an image is a false negative only when it has no detection at all.
``standard``
    an image is a false negative whenever no detection matched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DuplicateId, NoDetections
from .geometry import Box, iou

FN_MODES = ("no-detection", "standard")
DEFAULT_THRESHOLDS = (0.5, 0.75)


def sweep_grid(start: float = 0.5, stop: float = 0.95, step: float = 0.05) -> list[float]:
    """Inclusive threshold grid, rounded so 0.5 + 9 * 0.05 prints as 0.95."""
    n = int(round((stop - start) / step))
    return [round(start + k * step, 10) for k in range(n + 1)]


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class ImageOutcome:
    image_id: str
    tp: int
    fp: int
    fn: int
    matched_iou: float | None = None


@dataclass(frozen=True)
class EvalReport:
    threshold: float
    precision: float
    recall: float
    mean_iou: float
    tp: int
    fp: int
    fn: int
    n_images: int
    # names of metrics whose denominator was zero and were reported as 0
    degenerate: tuple[str, ...] = field(default=())


def rank_key(det: Detection):
    b = det.box
    return (-det.score, -b.area, b.as_tuple())


def rank_detections(dets: Iterable[Detection]) -> list[Detection]:
    return sorted(dets, key=rank_key)


def select_primary(dets: Sequence[Detection]) -> Detection:
    """Pick the single ROI from a detector's output.

    Highest confidence wins. Equal confidences fall back to the larger box,
    and equal areas to the lexicographically smallest coordinates, so the
    result does not depend on input order.

    Raises:
        NoDetections: if ``dets`` is empty.
    """
    if not dets:
        raise NoDetections("cannot select a primary box from an empty detection list")
    return min(dets, key=rank_key)


def _check_threshold(threshold: float) -> None:
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"IoU threshold must lie in (0, 1), got {threshold}")


def _check_mode(fn_mode: str) -> None:
    if fn_mode not in FN_MODES:
        raise ValueError(f"fn_mode must be one of {FN_MODES}, got {fn_mode!r}")


def match_image(
    gt: Box,
    dets: Sequence[Detection],
    threshold: float = 0.5,
    fn_mode: str = "no-detection",
    image_id: str = "",
) -> ImageOutcome:
    _check_threshold(threshold)
    _check_mode(fn_mode)
    matched = None
    for det in rank_detections(dets):
        overlap = iou(gt, det.box)
        if overlap > threshold:
            matched = overlap
            break
    tp = int(matched is not None)
    fp = len(dets) - tp
    if fn_mode == "no-detection":
        fn = int(len(dets) == 0)
    else:
        fn = 1 - tp
    return ImageOutcome(image_id, tp, fp, fn, matched)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def summarize(outcomes: Iterable[ImageOutcome], threshold: float) -> EvalReport:
    """Reduce per-image outcomes to a report.

    The reduction is order independent: counts are integer sums and the IoU
    mean uses a correctly rounded sum.
    """
    outcomes = list(outcomes)
    tp = sum(o.tp for o in outcomes)
    fp = sum(o.fp for o in outcomes)
    fn = sum(o.fn for o in outcomes)
    ious = [o.matched_iou for o in outcomes if o.matched_iou is not None]
    values = {
        "precision": _ratio(tp, tp + fp),
        "recall": _ratio(tp, tp + fn),
        "mean_iou": math.fsum(ious) / len(ious) if ious else None,
    }
    degenerate = tuple(k for k, v in values.items() if v is None)
    return EvalReport(
        threshold=threshold,
        precision=values["precision"] or 0.0,
        recall=values["recall"] or 0.0,
        mean_iou=values["mean_iou"] or 0.0,
        tp=tp,
        fp=fp,
        fn=fn,
        n_images=len(outcomes),
        degenerate=degenerate,
    )


def _check_unique(pairs) -> None:
    seen = set()
    for image_id, _, _ in pairs:
        if image_id in seen:
            raise DuplicateId(image_id, "evaluation input")
        seen.add(image_id)


def match_all(pairs, threshold: float, fn_mode: str = "no-detection") -> list[ImageOutcome]:
    """Per-image outcomes for ``(image_id, gt_box, detections)`` triples, sorted by id."""
    pairs = list(pairs)
    _check_unique(pairs)
    out = [match_image(gt, dets, threshold, fn_mode, image_id) for image_id, gt, dets in pairs]
    return sorted(out, key=lambda o: o.image_id)


def evaluate(pairs, threshold: float = 0.5, fn_mode: str = "no-detection") -> EvalReport:
    """Evaluate ``(image_id, gt_box, detections)`` triples at one IoU threshold.

    Raises:
        DuplicateId: if an image id appears more than once.
    """
    return summarize(match_all(pairs, threshold, fn_mode), threshold)


def threshold_sweep(pairs, thresholds: Sequence[float], fn_mode: str = "no-detection") -> list[EvalReport]:
    """One report per threshold; thresholds must be strictly increasing."""
    thresholds = list(thresholds)
    for t in thresholds:
        _check_threshold(t)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError(f"thresholds must be strictly increasing, got {thresholds}")
    pairs = list(pairs)
    return [evaluate(pairs, t, fn_mode) for t in thresholds]
