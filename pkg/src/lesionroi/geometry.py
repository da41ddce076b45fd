"""
Axis-aligned box arithmetic on integer pixel grids.

Boxes use half-open pixel coordinates ``[x_min, x_max) x [y_min, y_max)`` with
the origin at the top-left corner, x to the right and y downward. A box covers
exactly ``area`` pixel centers, so IoU is a ratio of two integer pixel counts
and boxes that merely touch share no pixel.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from enum import IntEnum

from .errors import InvalidBox


class QuarterTurn(IntEnum):
    """Clockwise rotation by a multiple of 90 degrees."""

    R0 = 0
    R90 = 90
    R180 = 180
    R270 = 270

    @property
    def quarters(self) -> int:
        return self.value // 90

    @classmethod
    def from_degrees(cls, degrees: int) -> "QuarterTurn":
        try:
            return cls(int(degrees) % 360)
        except ValueError:
            raise ValueError(f"rotation must be a multiple of 90 degrees, got {degrees}") from None


ALL_TURNS = (QuarterTurn.R0, QuarterTurn.R90, QuarterTurn.R180, QuarterTurn.R270)


@dataclass(frozen=True, order=True)
class Box:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            # numpy integers are accepted and normalised; floats are not
            try:
                object.__setattr__(self, name, operator.index(v))
            except TypeError:
                raise InvalidBox(f"{name} must be an integer, got {v!r}") from None
        if self.x_min < 0 or self.y_min < 0:
            raise InvalidBox(f"negative box origin: {self.as_tuple()}")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise InvalidBox(f"box has no area: {self.as_tuple()}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def contains(self, other: "Box") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )

    def inside_frame(self, width: int, height: int) -> bool:
        return self.x_max <= width and self.y_max <= height

    def shift(self, dx: int, dy: int) -> "Box":
        return Box(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)


def intersection_area(a: Box, b: Box) -> int:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0
    return w * h


def intersect(a: Box, b: Box) -> Box | None:
    """Largest box contained in both ``a`` and ``b``, or None when they share no pixel."""
    x0, y0 = max(a.x_min, b.x_min), max(a.y_min, b.y_min)
    x1, y1 = min(a.x_max, b.x_max), min(a.y_max, b.y_max)
    if x0 >= x1 or y0 >= y1:
        return None
    return Box(x0, y0, x1, y1)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes.

    Both areas are exact integers; the only rounding is the final division.
    """
    inter = intersection_area(a, b)
    return inter / (a.area + b.area - inter)


def rotate_box(box: Box, turn: QuarterTurn | int, width: int, height: int) -> Box:
    """Track a box through a clockwise rotation of its ``width x height`` frame.

    A 90 degree turn maps pixel (x, y) to (height - 1 - y, x) and the frame
    becomes ``height x width``.

    Raises:
        InvalidBox: if ``box`` does not lie inside the frame.
    """
    if not box.inside_frame(width, height):
        raise InvalidBox(f"box {box.as_tuple()} outside {width}x{height} frame")
    x0, y0, x1, y1 = box.as_tuple()
    q = QuarterTurn.from_degrees(turn).quarters
    if q == 0:
        return box
    if q == 1:
        return Box(height - y1, x0, height - y0, x1)
    if q == 2:
        return Box(width - x1, height - y1, width - x0, height - y0)
    return Box(y0, width - x1, y1, width - x0)


def rotated_frame(width: int, height: int, turn: QuarterTurn | int) -> tuple[int, int]:
    if QuarterTurn.from_degrees(turn).quarters % 2:
        return height, width
    return width, height


def _window_start(center: float, side: int, limit: int) -> int:
    start = math.floor((2 * center - side) / 2)
    return min(max(start, 0), limit - side)


def clamp_window(cx: float, cy: float, side: int, width: int, height: int) -> Box:
    """Square ``side x side`` window centred on (cx, cy), translated into the frame.

    The window is never shrunk; when it would cross an image edge it slides
    back inside. The minimum coordinate before clamping is
    ``floor((2c - side) / 2)``.

    Raises:
        ValueError: if ``side`` exceeds either frame dimension or is not positive.
    """
    if side < 1:
        raise ValueError(f"window side must be positive, got {side}")
    if side > width or side > height:
        raise ValueError(f"window side {side} does not fit in {width}x{height} frame")
    x0 = _window_start(cx, side, width)
    y0 = _window_start(cy, side, height)
    return Box(x0, y0, x0 + side, y0 + side)
