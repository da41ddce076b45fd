"""
ROI-centred multi-magnification crops crossed with quarter-turn rotations.

For one source image the planner builds a ladder of square window sides, from
a tight window around the lesion up to the shorter image side, and pairs each
window with every requested rotation. Executing a plan crops, rotates and then
resizes to ``target_side``. Windows are never smaller than ``target_side`` so
every output is a downsample (or an identity copy), never an upsample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .geometry import ALL_TURNS, Box, QuarterTurn, clamp_window, intersect, rotate_box
from .mask_ops import as_mask, crop_raster, resize_mask, rotate_raster


def _exact(x) -> Fraction:
    # 0.1 should mean one tenth, not the nearest binary double
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


@dataclass(frozen=True)
class AugmentParams:
    target_side: int = 224
    margin: float = 0.10
    step: float = 1.5
    terminal_slack: float = 0.10
    rotations: tuple[QuarterTurn, ...] = ALL_TURNS

    def __post_init__(self):
        if self.target_side < 1:
            raise ValueError(f"target_side must be >= 1, got {self.target_side}")
        if not self.step > 1:
            raise ValueError(f"step must be > 1, got {self.step}")
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if self.terminal_slack < 0:
            raise ValueError(f"terminal_slack must be >= 0, got {self.terminal_slack}")
        turns = tuple(sorted({QuarterTurn.from_degrees(t) for t in self.rotations}))
        if not turns:
            raise ValueError("at least one rotation is required")
        object.__setattr__(self, "rotations", turns)


@dataclass(frozen=True)
class PlanRecord:
    level: int
    window: Box
    turn: QuarterTurn
    out_id: str


@dataclass(frozen=True)
class AugmentationPlan:
    image_id: str
    width: int
    height: int
    roi: Box
    records: tuple[PlanRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class AugmentedSample:
    image: np.ndarray
    mask: np.ndarray | None
    record: PlanRecord


def magnification_ladder(width: int, height: int, roi: Box, p: AugmentParams = AugmentParams()) -> list[int]:
    """Strictly increasing window sides for one image.

    The first side is the lesion's longer edge plus ``margin``, at least
    ``target_side`` and at most the shorter frame side. Later sides grow
    geometrically by ``step`` while they fit; the full shorter side is appended
    as a last level when it is more than ``terminal_slack`` larger than the
    previous one.

    Raises:
        ValueError: if the ROI lies outside the frame, or the frame is smaller
            than ``target_side`` (every output would need upsampling).
    """
    if not roi.inside_frame(width, height):
        raise ValueError(f"ROI {roi.as_tuple()} outside {width}x{height} frame")
    limit = min(width, height)
    if limit < p.target_side:
        raise ValueError(
            f"{width}x{height} frame is smaller than target side {p.target_side}; refusing to upsample"
        )
    longest = max(roi.width, roi.height)
    first = max(math.ceil(longest * (1 + _exact(p.margin))), p.target_side)
    sides = [min(first, limit)]
    step = _exact(p.step)
    k = 1
    while True:
        side = _round_half_up(sides[0] * step**k)
        if side > limit:
            break
        if side > sides[-1]:
            sides.append(side)
        k += 1
    if Fraction(limit, sides[-1]) > 1 + _exact(p.terminal_slack):
        sides.append(limit)
    return sides


def plan(image_id: str, width: int, height: int, roi: Box, p: AugmentParams = AugmentParams()) -> AugmentationPlan:
    """Windows centred on the ROI at every ladder level, times every rotation.

    Records are ordered by ascending window side, then by rotation angle.
    """
    cx, cy = roi.center
    records = []
    for level, side in enumerate(magnification_ladder(width, height, roi, p)):
        window = clamp_window(cx, cy, side, width, height)
        for turn in p.rotations:
            records.append(PlanRecord(level, window, turn, f"{image_id}_m{level}_r{int(turn)}"))
    return AugmentationPlan(image_id, width, height, roi, tuple(records))


def _linear_taps(src: int, dst: int):
    # half-pixel centres: output pixel i samples source coordinate (i + 0.5) * src / dst - 0.5
    x = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    x = np.clip(x, 0.0, src - 1)
    lo = np.floor(x).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, x - lo


def resize_image(image: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize to exactly ``new_w x new_h`` (aspect ratio is not kept).

    Works on ``(H, W)`` and ``(H, W, C)`` arrays. Integer inputs are rounded
    back to their dtype; float inputs stay float64.
    """
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size must be positive, got {new_w}x{new_h}")
    image = np.asarray(image)
    h, w = image.shape[:2]
    if (w, h) == (new_w, new_h):
        return image.copy()
    # gather the needed rows before widening to float; sources can be very large
    lo, hi, t = _linear_taps(h, new_h)
    t = t.reshape((-1,) + (1,) * (image.ndim - 1))
    rows = image[lo].astype(np.float64) * (1 - t) + image[hi].astype(np.float64) * t
    lo, hi, t = _linear_taps(w, new_w)
    t = t.reshape((1, -1) + (1,) * (image.ndim - 2))
    out = rows[:, lo] * (1 - t) + rows[:, hi] * t
    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        out = np.clip(np.floor(out + 0.5), info.min, info.max)
        return out.astype(image.dtype)
    return out


def apply_plan(
    image: np.ndarray,
    mask: np.ndarray | None,
    aug_plan: AugmentationPlan,
    p: AugmentParams = AugmentParams(),
) -> list[AugmentedSample]:
    """Crop, rotate and resize the image (and mask, in lockstep) for every record.

    Raises:
        ValueError: if the image or mask does not match the plan's frame, or a
            window is smaller than ``target_side``.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    if (w, h) != (aug_plan.width, aug_plan.height):
        raise ValueError(f"image is {w}x{h}, plan expects {aug_plan.width}x{aug_plan.height}")
    if mask is not None:
        mask = as_mask(mask)
        if mask.shape != (h, w):
            raise ValueError(f"mask shape {mask.shape} does not match image {(h, w)}")
    side = p.target_side
    out = []
    for rec in aug_plan.records:
        if rec.window.width < side:
            raise ValueError(f"window {rec.window.as_tuple()} would require upsampling to {side}")
        img = resize_image(rotate_raster(crop_raster(image, rec.window), rec.turn), side, side)
        msk = None
        if mask is not None:
            msk = resize_mask(rotate_raster(crop_raster(mask, rec.window), rec.turn), side, side)
        out.append(AugmentedSample(img, msk, rec))
    return out


def _first_sample(edge: int, out_side: int, in_side: int) -> int:
    # smallest output index i with floor((i + 0.5) * in / out) >= edge
    return -((-(2 * edge * out_side - in_side)) // (2 * in_side))


def project_box(box: Box, record: PlanRecord, target_side: int) -> Box | None:
    """Map a source-frame box through a record's crop, rotation and resize.

    The result is the box a nearest-neighbour resize of a filled rectangle
    would occupy, or None when the box misses the window or vanishes.
    """
    window = record.window
    clipped = intersect(box, window)
    if clipped is None:
        return None
    local = clipped.shift(-window.x_min, -window.y_min)
    turned = rotate_box(local, record.turn, window.width, window.height)
    n = window.width
    x0, y0 = (_first_sample(v, target_side, n) for v in (turned.x_min, turned.y_min))
    x1, y1 = (_first_sample(v, target_side, n) for v in (turned.x_max, turned.y_max))
    if x1 <= x0 or y1 <= y0:
        return None
    return Box(x0, y0, x1, y1)


def expansion(plans: Sequence[AugmentationPlan]) -> float:
    """Average number of outputs per source image."""
    return sum(len(pl) for pl in plans) / len(plans) if plans else 0.0
