"""
Binary mask primitives.

Masks are 2-D boolean numpy arrays indexed ``mask[row, col]`` (``row`` is y,
``col`` is x), so a mask of shape ``(height, width)`` lives in a
``width x height`` frame.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import InvalidBox, NoForeground
from .geometry import Box, QuarterTurn

FOREGROUND_THRESHOLD = 128


def as_mask(data) -> np.ndarray:
    """Coerce ``data`` to a 2-D boolean mask; nonzero values are foreground."""
    m = np.asarray(data)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool, copy=False)


def binarize(gray: np.ndarray, threshold: int = FOREGROUND_THRESHOLD) -> np.ndarray:
    """8-bit grayscale to boolean mask; values >= ``threshold`` are foreground."""
    gray = np.asarray(gray)
    if gray.ndim == 3:
        # RGB(A) masks: use the first channel, they are grey anyway
        gray = gray[..., 0]
    return gray >= threshold


def foreground_count(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))


def circumscribe(mask: np.ndarray) -> Box:
    """Minimal box around every foreground pixel, ignoring connectivity.

    Raises:
        NoForeground: if the mask is all background.
    """
    mask = as_mask(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise NoForeground("mask has no foreground pixel")
    cols = np.flatnonzero(mask.any(axis=0))
    return Box(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep only the largest 4-connected foreground component.

    Ties go to the component whose first pixel in row-major order comes first.
    """
    mask = as_mask(mask)
    labels, n = ndimage.label(mask)
    if n == 0:
        return np.zeros_like(mask)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def rotate_mask(mask: np.ndarray, turn: QuarterTurn | int) -> np.ndarray:
    """Rotate clockwise by a quarter-turn multiple; an exact pixel permutation."""
    return rotate_raster(as_mask(mask), turn)


def rotate_raster(raster: np.ndarray, turn: QuarterTurn | int) -> np.ndarray:
    # np.rot90 with negative k rotates clockwise in (row, col) space
    q = QuarterTurn.from_degrees(turn).quarters
    return np.ascontiguousarray(np.rot90(raster, k=-q, axes=(0, 1)))


def crop_raster(raster: np.ndarray, window: Box) -> np.ndarray:
    h, w = raster.shape[:2]
    if not window.inside_frame(w, h):
        raise InvalidBox(f"window {window.as_tuple()} outside {w}x{h} frame")
    return raster[window.y_min:window.y_max, window.x_min:window.x_max].copy()


def crop_mask(mask: np.ndarray, window: Box) -> np.ndarray:
    return crop_raster(as_mask(mask), window)


def nearest_indices(src: int, dst: int) -> np.ndarray:
    """Source index sampled by each destination pixel center."""
    # floor((i + 0.5) * src / dst) in exact integer arithmetic
    return ((2 * np.arange(dst, dtype=np.int64) + 1) * src) // (2 * dst)


def resize_mask(mask: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Nearest-neighbour resize; output pixel centers are mapped back through the scale."""
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size must be positive, got {new_w}x{new_h}")
    mask = as_mask(mask)
    h, w = mask.shape
    if (w, h) == (new_w, new_h):
        return mask.copy()
    return mask[np.ix_(nearest_indices(h, new_h), nearest_indices(w, new_w))]
