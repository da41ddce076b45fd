"""Independent reference implementations used as test oracles.

None of these call into lesionroi's arithmetic: boxes are rasterized and
counted, rotations are done pixel by pixel, bounds come from explicit scans.
"""
import numpy as np
import pytest
from PIL import Image


def raster_box(box, width, height):
    """Boolean grid with the pixel centres covered by ``(x0, y0, x1, y1)`` set."""
    x0, y0, x1, y1 = box
    grid = np.zeros((height, width), dtype=bool)
    for y in range(height):
        for x in range(width):
            if x0 <= x + 0.5 < x1 and y0 <= y + 0.5 < y1:
                grid[y, x] = True
    return grid


def raster_box_fast(box, width, height):
    x0, y0, x1, y1 = box
    grid = np.zeros((height, width), dtype=bool)
    grid[y0:y1, x0:x1] = True
    return grid


def pixel_iou(a, b, width, height):
    """IoU as a pair of pixel counts (intersection, union)."""
    ra, rb = raster_box_fast(a, width, height), raster_box_fast(b, width, height)
    return int(np.count_nonzero(ra & rb)), int(np.count_nonzero(ra | rb))


def scan_bounds(mask):
    """Min/max scan over foreground pixels; returns (x0, y0, x1, y1) or None."""
    xs, ys = [], []
    h, w = mask.shape
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                xs.append(x)
                ys.append(y)
    if not xs:
        return None
    return (min(xs), min(ys), max(xs) + 1, max(ys) + 1)


def rotate_by_hand(mask, quarters):
    """Clockwise quarter turns via the pixel map (x, y) -> (H - 1 - y, x)."""
    out = np.asarray(mask)
    for _ in range(quarters % 4):
        h, w = out.shape[:2]
        nxt = np.zeros((w, h) + out.shape[2:], dtype=out.dtype)
        for y in range(h):
            for x in range(w):
                nxt[x, h - 1 - y] = out[y, x]
        out = nxt
    return out


def random_blob_mask(rng, width, height, min_radius=20):
    """Filled ellipse (lesion-like) fully inside the frame."""
    max_r = min(width, height) // 2 - 1
    rx = int(rng.integers(min_radius, max_r + 1))
    ry = int(rng.integers(min_radius, max_r + 1))
    cx = rng.uniform(rx, width - rx)
    cy = rng.uniform(ry, height - ry)
    yy, xx = np.mgrid[0:height, 0:width]
    return ((xx + 0.5 - cx) / rx) ** 2 + ((yy + 0.5 - cy) / ry) ** 2 <= 1.0


def write_dataset(root, specs, with_labels=False):
    """Write images and masks plus ``manifest.csv``; ``specs`` maps id -> (image, mask)."""
    (root / "img").mkdir(parents=True, exist_ok=True)
    (root / "msk").mkdir(parents=True, exist_ok=True)
    lines = ["image_id,image_path,mask_path,label"]
    for i, (image_id, (image, mask)) in enumerate(sorted(specs.items())):
        Image.fromarray(image).save(root / "img" / f"{image_id}.png")
        mask_rel = ""
        if mask is not None:
            Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(root / "msk" / f"{image_id}.png")
            mask_rel = f"msk/{image_id}.png"
        label = ("benign", "malignant")[i % 2] if with_labels else ""
        lines.append(f"{image_id},img/{image_id}.png,{mask_rel},{label}")
    (root / "manifest.csv").write_text("\n".join(lines) + "\n")
    return root / "manifest.csv"


@pytest.fixture
def rng():
    return np.random.default_rng(20190611)


@pytest.fixture
def small_dataset(tmp_path, rng):
    """Six 320x240 RGB images with elliptical lesion masks; one all-background mask."""
    specs = {}
    for k in range(6):
        image = rng.integers(0, 256, size=(240, 320, 3), dtype=np.uint8)
        mask = random_blob_mask(rng, 320, 240)
        if k == 5:
            mask = np.zeros_like(mask)
        specs[f"img{k:02d}"] = (image, mask)
    return write_dataset(tmp_path / "data", specs, with_labels=True)


def _outranks(d, e):
    """True when detection ``d`` = (box, score) is ranked ahead of ``e``."""
    (bd, sd), (be, se) = d, e
    if sd != se:
        return sd > se
    ad = (bd[2] - bd[0]) * (bd[3] - bd[1])
    ae = (be[2] - be[0]) * (be[3] - be[1])
    if ad != ae:
        return ad > ae
    return bd < be


def brute_force_match(gt, dets, threshold, fn_mode="no-detection", frame=64):
    """Per-image (tp, fp, fn, matched_iou) by pairwise comparison and pixel counting.

    ``gt`` is a coordinate tuple and ``dets`` a list of (tuple, score).
    """
    above = []
    for d in dets:
        inter, union = pixel_iou(gt, d[0], frame, frame)
        if inter / union > threshold:
            above.append((d, inter / union))
    matched = None
    for d, v in above:
        if all(_outranks(d, e) or e == d for e, _ in above):
            matched = v
    tp = 1 if above else 0
    assert (matched is not None) == bool(tp)
    fn = int(not dets) if fn_mode == "no-detection" else 1 - tp
    return tp, len(dets) - tp, fn, matched


def random_instance(rng, n_images, max_dets=5, frame=64):
    """Synthetic (image_id, gt, dets) triples as plain tuples, with some near-duplicates."""
    out = []
    for i in range(n_images):
        x0, y0 = (int(v) for v in rng.integers(0, frame - 8, 2))
        x1 = int(rng.integers(x0 + 4, min(frame, x0 + 40) + 1))
        y1 = int(rng.integers(y0 + 4, min(frame, y0 + 40) + 1))
        gt = (x0, y0, x1, y1)
        dets = []
        for _ in range(int(rng.integers(0, max_dets + 1))):
            jitter = rng.integers(-6, 7, 4)
            bx0 = int(np.clip(x0 + jitter[0], 0, frame - 2))
            by0 = int(np.clip(y0 + jitter[1], 0, frame - 2))
            bx1 = int(np.clip(x1 + jitter[2], bx0 + 1, frame))
            by1 = int(np.clip(y1 + jitter[3], by0 + 1, frame))
            # coarse scores so ties actually happen
            score = float(rng.integers(0, 5)) / 4
            dets.append(((bx0, by0, bx1, by1), score))
        out.append((f"im{i:04d}", gt, dets))
    return out


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title} [{detail}]")
