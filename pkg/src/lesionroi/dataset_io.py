"""
File formats: manifests, images and masks, detections, GT tables, reports.

Manifest (UTF-8 CSV)::

    image_id,image_path,mask_path,label

``mask_path`` and ``label`` may be empty. Relative paths are resolved against
the manifest's directory. ``label`` is ``benign`` or ``malignant``.

Detections (JSON Lines), one object per image::

    {"image_id": "ISIC_0000001", "boxes": [[x_min, y_min, x_max, y_max, score], ...]}

Ground-truth table (CSV)::

    image_id,x_min,y_min,x_max,y_max

Every float written to a CSV uses six decimal places.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .augment import AugmentedSample
from .detection_eval import Detection, EvalReport
from .errors import (
    DanglingPath,
    DuplicateId,
    InvalidBox,
    ManifestNotFound,
    NoForeground,
    ParseError,
    ValidationError,
)
from .geometry import Box
from .mask_ops import binarize, circumscribe, largest_component

MANIFEST_HEADER = ("image_id", "image_path", "mask_path", "label")
GT_HEADER = ("image_id", "x_min", "y_min", "x_max", "y_max")
REPORT_HEADER = ("threshold", "precision", "recall", "mean_iou", "tp", "fp", "fn", "n_images")
CURVE_HEADER = ("threshold", "precision", "recall", "mean_iou")
LABELS = ("benign", "malignant")


def fmt(x: float) -> str:
    return f"{x:.6f}"


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: Path
    mask_path: Path | None = None
    label: str | None = None


@dataclass(frozen=True)
class Reject:
    image_id: str
    reason: str


# --------------------------------------------------------------------------- writing helpers


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` through a sibling temp file so readers never see a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------- manifests


def load_manifest(path: str | os.PathLike, check_paths: bool = True) -> list[ManifestEntry]:
    """Read and validate a manifest; entries come back sorted by image_id.

    Raises:
        ManifestNotFound: if the file does not exist.
        ParseError: on a bad header or row shape.
        DuplicateId: if an image_id repeats.
        DanglingPath: if ``check_paths`` and a referenced file is missing.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestNotFound(f"manifest not found: {path}")
    base = path.parent
    entries: dict[str, ManifestEntry] = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header[: len(MANIFEST_HEADER)]) != MANIFEST_HEADER:
            raise ParseError(f"manifest header must start with {','.join(MANIFEST_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise ParseError("expected at least image_id,image_path", lineno)
            row = [c.strip() for c in row] + [""] * (4 - len(row))
            image_id, image_path, mask_path, label = row[:4]
            if not image_id or not image_path:
                raise ParseError("image_id and image_path are required", lineno)
            if image_id in entries:
                raise DuplicateId(image_id, f"{path} line {lineno}")
            if label and label not in LABELS:
                raise ValidationError(f"label must be one of {LABELS}, got {label!r}", lineno)
            entries[image_id] = ManifestEntry(
                image_id,
                base / image_path,
                base / mask_path if mask_path else None,
                label or None,
            )
    out = [entries[k] for k in sorted(entries)]
    if check_paths:
        for e in out:
            for p in (e.image_path, e.mask_path):
                if p is not None and not p.exists():
                    raise DanglingPath(f"{e.image_id}: missing file {p}")
    return out


def _rel(p: Path | None, base: Path) -> str:
    if p is None:
        return ""
    return Path(os.path.relpath(p, base)).as_posix()


def manifest_text(entries: Sequence[ManifestEntry], base: str | os.PathLike) -> str:
    base = Path(base)
    rows = [
        (e.image_id, _rel(e.image_path, base), _rel(e.mask_path, base), e.label or "")
        for e in sorted(entries, key=lambda e: e.image_id)
    ]
    return _csv_text(MANIFEST_HEADER, rows)


def write_manifest(entries: Sequence[ManifestEntry], path: str | os.PathLike) -> None:
    """Write a manifest with paths relative to its own directory."""
    path = Path(path)
    atomic_write_text(path, manifest_text(entries, path.parent))


# --------------------------------------------------------------------------- rasters


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Decode an image as 8-bit RGB, shape ``(H, W, 3)``."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def read_mask(path: str | os.PathLike, threshold: int = 128) -> np.ndarray:
    """Decode an 8-bit grayscale mask and binarize it (``>= threshold`` is foreground)."""
    with Image.open(path) as im:
        if im.mode in ("1", "L", "P", "RGB", "RGBA", "LA"):
            gray = np.asarray(im.convert("L"))
        else:
            # 16-bit and float masks: compare raw values
            gray = np.asarray(im)
    return binarize(gray, threshold)


def save_image(image: np.ndarray, path: str | os.PathLike) -> None:
    path = Path(path)
    im = Image.fromarray(np.asarray(image, dtype=np.uint8))
    if path.suffix.lower() in (".jpg", ".jpeg"):
        im.save(path, quality=95, subsampling=0)
    else:
        im.save(path, optimize=False)


def save_mask(mask: np.ndarray, path: str | os.PathLike) -> None:
    """Masks are stored as lossless 8-bit PNG with values 0 and 255."""
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path, format="PNG")


# --------------------------------------------------------------------------- detections


def _parse_box(values, lineno: int, with_score: bool) -> tuple[Box, float | None]:
    n = 5 if with_score else 4
    if not isinstance(values, list) or len(values) != n:
        raise ValidationError(f"box must be a list of {n} numbers, got {values!r}", lineno)
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise ValidationError(f"box entries must be numbers, got {values!r}", lineno)
    coords = values[:4]
    if not all(math.isfinite(v) for v in values):
        raise ValidationError(f"box entries must be finite, got {values!r}", lineno)
    # fractional detector coordinates are rounded outward onto the pixel grid
    x0, y0 = math.floor(coords[0]), math.floor(coords[1])
    x1, y1 = math.ceil(coords[2]), math.ceil(coords[3])
    try:
        box = Box(x0, y0, x1, y1)
    except InvalidBox as exc:
        raise ValidationError(str(exc), lineno) from None
    score = None
    if with_score:
        score = float(values[4])
        if not (0.0 <= score <= 1.0):
            raise ValidationError(f"score must lie in [0, 1], got {score}", lineno)
    return box, score


def read_detections(path: str | os.PathLike) -> dict[str, list[Detection]]:
    """Parse a JSON Lines detections file into ``image_id -> detections``.

    Images that do not appear have no detections. Blank lines are ignored.

    Raises:
        ParseError: on malformed JSON or a missing field (with the line number).
        ValidationError: on an invalid box or out-of-range score.
        DuplicateId: if an image appears on two lines.
    """
    out: dict[str, list[Detection]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict) or "image_id" not in obj or "boxes" not in obj:
                raise ParseError("expected an object with image_id and boxes", lineno)
            image_id = str(obj["image_id"])
            if image_id in out:
                raise DuplicateId(image_id, f"{path} line {lineno}")
            boxes = obj["boxes"]
            if not isinstance(boxes, list):
                raise ParseError("boxes must be a list", lineno)
            dets = []
            for values in boxes:
                box, score = _parse_box(values, lineno, with_score=True)
                dets.append(Detection(box, score))
            out[image_id] = dets
    return dict(sorted(out.items()))


def detections_text(dets: Mapping[str, Sequence[Detection]]) -> str:
    lines = []
    for image_id in sorted(dets):
        boxes = [[*d.box.as_tuple(), d.score] for d in dets[image_id]]
        lines.append(json.dumps({"image_id": image_id, "boxes": boxes}, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def write_detections(dets: Mapping[str, Sequence[Detection]], path: str | os.PathLike) -> None:
    atomic_write_text(path, detections_text(dets))


# --------------------------------------------------------------------------- ground truth


def gt_from_mask(mask: np.ndarray, use_largest_component: bool = False) -> Box:
    if use_largest_component:
        mask = largest_component(mask)
    return circumscribe(mask)


def convert_one(entry: ManifestEntry, use_largest_component: bool = False) -> Box | Reject:
    """GT box for one manifest entry, or a Reject explaining why there is none."""
    if entry.mask_path is None:
        return Reject(entry.image_id, "no mask_path")
    try:
        mask = read_mask(entry.mask_path)
    except (OSError, ValueError) as exc:
        return Reject(entry.image_id, f"undecodable mask: {exc}")
    try:
        return gt_from_mask(mask, use_largest_component)
    except NoForeground:
        return Reject(entry.image_id, "mask has no foreground")


def convert_gt(
    entries: Sequence[ManifestEntry],
    use_largest_component: bool = False,
    map_fn=map,
) -> tuple[dict[str, Box], list[Reject]]:
    """Circumscribe every entry's mask.

    ``map_fn`` lets callers fan the per-image work out to a pool; results are
    re-sorted by image_id either way.
    """
    results = map_fn(lambda e: convert_one(e, use_largest_component), entries)
    boxes: dict[str, Box] = {}
    rejects: list[Reject] = []
    for entry, res in zip(entries, results):
        if isinstance(res, Reject):
            rejects.append(res)
        else:
            boxes[entry.image_id] = res
    return dict(sorted(boxes.items())), sorted(rejects, key=lambda r: r.image_id)


def gt_text(boxes: Mapping[str, Box]) -> str:
    return _csv_text(GT_HEADER, ((k, *boxes[k].as_tuple()) for k in sorted(boxes)))


def write_gt(boxes: Mapping[str, Box], path: str | os.PathLike) -> None:
    atomic_write_text(path, gt_text(boxes))


def read_gt(path: str | os.PathLike) -> dict[str, Box]:
    out: dict[str, Box] = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != GT_HEADER:
            raise ParseError(f"GT header must be {','.join(GT_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ParseError("expected 5 columns", lineno)
            image_id = row[0].strip()
            if image_id in out:
                raise DuplicateId(image_id, f"{path} line {lineno}")
            try:
                coords = [int(c) for c in row[1:]]
            except ValueError:
                raise ParseError(f"non-integer coordinate in {row[1:]}", lineno) from None
            try:
                out[image_id] = Box(*coords)
            except InvalidBox as exc:
                raise ValidationError(str(exc), lineno) from None
    return dict(sorted(out.items()))


def write_rejects(rejects: Sequence[Reject], path: str | os.PathLike) -> None:
    atomic_write_text(path, _csv_text(("image_id", "reason"), ((r.image_id, r.reason) for r in rejects)))


# --------------------------------------------------------------------------- reports


def report_rows(reports: Sequence[EvalReport]) -> list[tuple]:
    return [
        (fmt(r.threshold), fmt(r.precision), fmt(r.recall), fmt(r.mean_iou), r.tp, r.fp, r.fn, r.n_images)
        for r in reports
    ]


def write_eval_report(reports: Sequence[EvalReport], path: str | os.PathLike) -> None:
    """One row per IoU threshold: precision, recall, mean IoU, then raw counts."""
    atomic_write_text(path, _csv_text(REPORT_HEADER, report_rows(reports)))


def write_curve(curve: Sequence[EvalReport], path: str | os.PathLike) -> None:
    rows = [(fmt(r.threshold), fmt(r.precision), fmt(r.recall), fmt(r.mean_iou)) for r in curve]
    atomic_write_text(path, _csv_text(CURVE_HEADER, rows))


def write_table(header: Sequence[str], rows: Iterable[Sequence], path: str | os.PathLike) -> None:
    """Generic CSV writer; floats are formatted with six decimals."""
    rows = [[fmt(v) if isinstance(v, float) else v for v in row] for row in rows]
    atomic_write_text(path, _csv_text(header, rows))


def read_labels(path: str | os.PathLike) -> dict[str, str]:
    """Read an ``image_id,label`` CSV of class predictions."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header[:2]) != ("image_id", "label"):
            raise ParseError("label file header must start with image_id,label", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            image_id, label = row[0].strip(), row[1].strip() if len(row) > 1 else ""
            if label not in LABELS:
                raise ValidationError(f"label must be one of {LABELS}, got {label!r}", lineno)
            if image_id in out:
                raise DuplicateId(image_id, f"{path} line {lineno}")
            out[image_id] = label
    return dict(sorted(out.items()))


# --------------------------------------------------------------------------- augmented output


@dataclass(frozen=True)
class AugmentedItem:
    """One augmented output waiting to be written."""

    sample: AugmentedSample
    label: str | None = None


def augmented_paths(out_dir: Path, out_id: str, image_ext: str, with_mask: bool) -> tuple[Path, Path | None]:
    image_path = out_dir / "images" / f"{out_id}.{image_ext}"
    mask_path = out_dir / "masks" / f"{out_id}.png" if with_mask else None
    return image_path, mask_path


def write_sample(item: AugmentedItem, out_dir: Path, image_ext: str = "png") -> tuple[ManifestEntry, Box | None]:
    """Write one augmented image (and mask) and return its manifest entry and GT box."""
    s = item.sample
    image_path, mask_path = augmented_paths(out_dir, s.record.out_id, image_ext, s.mask is not None)
    save_image(s.image, image_path)
    box = None
    if s.mask is not None:
        save_mask(s.mask, mask_path)
        try:
            box = circumscribe(s.mask)
        except NoForeground:
            box = None
    return ManifestEntry(s.record.out_id, image_path, mask_path, item.label), box


def prepare_output_dir(out_dir: str | os.PathLike) -> Path:
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    return out_dir


def write_augmented(
    items: Sequence[AugmentedItem],
    out_dir: str | os.PathLike,
    image_ext: str = "png",
) -> list[ManifestEntry]:
    """Write images, masks, ``manifest.csv`` and ``gt.csv`` under ``out_dir``.

    GT boxes are re-derived from the augmented masks. If anything fails, the
    files written by this call are removed before the error propagates.
    """
    out_dir = prepare_output_dir(out_dir)
    written: list[Path] = []
    try:
        entries, boxes = [], {}
        for item in items:
            entry, box = write_sample(item, out_dir, image_ext)
            written += [p for p in (entry.image_path, entry.mask_path) if p is not None]
            entries.append(entry)
            if box is not None:
                boxes[entry.image_id] = box
        finish_augmented(entries, boxes, out_dir)
        return sorted(entries, key=lambda e: e.image_id)
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise


def finish_augmented(entries: Sequence[ManifestEntry], boxes: Mapping[str, Box], out_dir: Path) -> None:
    ids = [e.image_id for e in entries]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DuplicateId(dup, "augmented output")
    write_manifest(entries, out_dir / "manifest.csv")
    if boxes:
        write_gt(boxes, out_dir / "gt.csv")

