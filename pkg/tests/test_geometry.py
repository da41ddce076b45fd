import itertools

import pytest
from hypothesis import given, strategies as st

from conftest import pixel_iou, raster_box, rotate_by_hand, scan_bounds
from lesionroi.errors import InvalidBox
from lesionroi.geometry import Box, QuarterTurn, clamp_window, intersect, iou, rotate_box


@st.composite
def boxes(draw, limit=64):
    x0 = draw(st.integers(0, limit - 1))
    y0 = draw(st.integers(0, limit - 1))
    x1 = draw(st.integers(x0 + 1, limit))
    y1 = draw(st.integers(y0 + 1, limit))
    return Box(x0, y0, x1, y1)


def test_box_rejects_empty_and_negative():
    with pytest.raises(InvalidBox):
        Box(5, 0, 5, 3)
    with pytest.raises(InvalidBox):
        Box(0, 4, 3, 2)
    with pytest.raises(InvalidBox):
        Box(-1, 0, 3, 3)
    with pytest.raises(InvalidBox):
        Box(0.5, 0, 3, 3)


def test_area_counts_pixel_centres():
    b = Box(2, 3, 7, 5)
    assert b.area == raster_box(b.as_tuple(), 10, 10).sum() == 10


def test_iou_identity_and_disjoint():
    assert iou(Box(0, 0, 10, 10), Box(0, 0, 10, 10)) == 1.0
    assert iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0


def test_iou_partial_overlap_matches_pixel_count():
    inter, union = pixel_iou((0, 0, 10, 10), (5, 5, 15, 15), 16, 16)
    assert (inter, union) == (25, 175)
    assert iou(Box(0, 0, 10, 10), Box(5, 5, 15, 15)) == 25 / 175
    assert iou(Box(0, 0, 10, 10), Box(5, 5, 15, 15)) == pytest.approx(0.142857, abs=1e-6)


def test_iou_exhaustive_small_grid():
    # every box on a 5x5 grid against every other
    coords = [(a, b) for a in range(5) for b in range(a + 1, 6)]
    all_boxes = [Box(x0, y0, x1, y1) for (x0, x1), (y0, y1) in itertools.product(coords, coords)]
    for a in all_boxes:
        for b in all_boxes[::7]:
            inter, union = pixel_iou(a.as_tuple(), b.as_tuple(), 5, 5)
            assert iou(a, b) == inter / union


@given(boxes(), boxes())
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert iou(a, a) == 1.0
    inter, union = pixel_iou(a.as_tuple(), b.as_tuple(), 64, 64)
    assert v == inter / union


def test_intersect_examples():
    assert intersect(Box(0, 0, 10, 10), Box(5, 5, 15, 15)) == Box(5, 5, 10, 10)
    assert intersect(Box(0, 0, 10, 10), Box(0, 0, 10, 10)) == Box(0, 0, 10, 10)
    assert intersect(Box(0, 0, 5, 5), Box(5, 0, 9, 5)) is None


@given(boxes(), boxes())
def test_intersect_is_coordinatewise_max_min(a, b):
    got = intersect(a, b)
    x0, y0 = max(a.x_min, b.x_min), max(a.y_min, b.y_min)
    x1, y1 = min(a.x_max, b.x_max), min(a.y_max, b.y_max)
    if x0 < x1 and y0 < y1:
        assert got == Box(x0, y0, x1, y1)
    else:
        assert got is None


def test_rotate_box_examples():
    assert rotate_box(Box(0, 0, 10, 8), QuarterTurn.R90, 10, 8) == Box(0, 0, 8, 10)
    assert rotate_box(Box(2, 1, 5, 3), QuarterTurn.R180, 10, 8) == Box(5, 5, 8, 7)


@pytest.mark.parametrize("turn", [0, 90, 180, 270])
def test_rotate_box_matches_rotated_raster(turn):
    w, h = 10, 8
    box = Box(2, 1, 5, 3)
    grid = raster_box(box.as_tuple(), w, h)
    expected = scan_bounds(rotate_by_hand(grid, turn // 90))
    assert rotate_box(box, turn, w, h).as_tuple() == expected


@given(boxes(limit=30), st.integers(1, 30), st.integers(1, 30))
def test_rotate_box_four_turns_identity(b, w, h):
    w, h = max(w, b.x_max), max(h, b.y_max)
    cur, cw, ch = b, w, h
    for _ in range(4):
        cur = rotate_box(cur, 90, cw, ch)
        cw, ch = ch, cw
    assert cur == b


def test_rotate_box_rejects_out_of_frame():
    with pytest.raises(InvalidBox):
        rotate_box(Box(0, 0, 11, 5), 90, 10, 8)


def test_clamp_window_examples():
    assert clamp_window(250, 187, 224, 500, 375) == Box(138, 75, 362, 299)
    assert clamp_window(0, 0, 224, 500, 375) == Box(0, 0, 224, 224)
    for cx, cy in [(0, 0), (250, 187), (499, 374), (10, 370)]:
        w = clamp_window(cx, cy, 375, 500, 375)
        assert (w.y_min, w.y_max) == (0, 375)


def test_clamp_window_rejects_oversized():
    with pytest.raises(ValueError):
        clamp_window(10, 10, 376, 500, 375)


@given(
    st.integers(1, 200),
    st.integers(1, 200),
    st.floats(-50, 250, allow_nan=False),
    st.floats(-50, 250, allow_nan=False),
    st.integers(1, 200),
)
def test_clamp_window_properties(w, h, cx, cy, side):
    if side > min(w, h):
        with pytest.raises(ValueError):
            clamp_window(cx, cy, side, w, h)
        return
    win = clamp_window(cx, cy, side, w, h)
    assert win.width == win.height == side
    assert win.inside_frame(w, h)
    centre_x, centre_y = win.center
    if side / 2 <= cx <= w - side / 2:
        assert abs(centre_x - cx) <= 1
    if side / 2 <= cy <= h - side / 2:
        assert abs(centre_y - cy) <= 1
