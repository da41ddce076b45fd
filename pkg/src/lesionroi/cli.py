"""
Command line entry point.

Every subcommand prints one ``key=value`` summary line on stdout and exits
with 0 on success, 1 when some images failed (they are listed in a rejects
report), and 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

from . import dataset_io as dio
from .augment import AugmentParams, apply_plan, plan, project_box, resize_image
from .detection_eval import (
    DEFAULT_THRESHOLDS,
    FN_MODES,
    match_all,
    select_primary,
    summarize,
    sweep_grid,
    threshold_sweep,
)
from .errors import DatasetError, LesionRoiError, ManifestNotFound, NoForeground
from .geometry import ALL_TURNS, QuarterTurn
from .mask_ops import circumscribe, largest_component, resize_mask
from .metrics import (
    AVERAGE_MODES,
    CLS_FIELDS,
    SEG_FIELDS,
    aggregate_seg,
    cls_metrics,
    label_confusion,
    seg_confusion,
    seg_metrics,
)

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
WORKERS_ENV = "LESIONROI_WORKERS"


class ConfigError(Exception):
    pass


def _summary(name: str, **fields) -> None:
    parts = [name]
    for k, v in fields.items():
        parts.append(f"{k}={dio.fmt(v) if isinstance(v, float) else v}")
    print(" ".join(parts))


@contextmanager
def _pool(workers: int):
    if workers <= 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=workers) as ex:
        yield ex.map


def _workers(args) -> int:
    value = args.workers
    if value is None:
        env = os.environ.get(WORKERS_ENV, "1")
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    if value < 1:
        raise ConfigError(f"worker count must be >= 1, got {value}")
    return value


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _require_parent(path: Path) -> Path:
    if not path.parent.is_dir():
        raise ConfigError(f"output directory does not exist: {path.parent}")
    return path


def _check_thresholds(values) -> list[float]:
    for t in values:
        if not 0 < t < 1:
            raise ConfigError(f"IoU thresholds must lie in (0, 1), got {t}")
    return values


# --------------------------------------------------------------------------- convert-gt


def cmd_convert_gt(args) -> int:
    manifest = _require_file(args.manifest, "manifest")
    out = _require_parent(args.out)
    workers = _workers(args)
    entries = dio.load_manifest(manifest)
    with _pool(workers) as pmap:
        boxes, rejects = dio.convert_gt(entries, args.largest_component, map_fn=pmap)
    dio.write_gt(boxes, out)
    if args.rejects:
        dio.write_rejects(rejects, args.rejects)
    for r in rejects:
        print(f"reject {r.image_id}: {r.reason}", file=sys.stderr)
    _summary("convert-gt", images=len(entries), boxes=len(boxes), rejects=len(rejects), out=out)
    return EXIT_PARTIAL if rejects else EXIT_OK


# --------------------------------------------------------------------------- detection evaluation


def _detection_pairs(args):
    gt = dio.read_gt(_require_file(args.gt, "GT table"))
    dets = dio.read_detections(_require_file(args.dets, "detections file"))
    rejects = []
    if args.manifest is not None:
        ids = [e.image_id for e in dio.load_manifest(_require_file(args.manifest, "manifest"), check_paths=False)]
        rejects = [dio.Reject(i, "no GT box") for i in ids if i not in gt]
        ids = [i for i in ids if i in gt]
        known = set(ids) | {r.image_id for r in rejects}
    else:
        ids = list(gt)
        known = set(ids)
    unknown = sorted(set(dets) - known)
    if unknown:
        raise DatasetError(f"detections reference unknown image ids: {', '.join(unknown[:5])}")
    pairs = [(i, gt[i], dets.get(i, [])) for i in ids]
    return pairs, rejects


def cmd_eval_det(args) -> int:
    thresholds = sorted(set(_check_thresholds(args.iou)))
    out = _require_parent(args.out)
    pairs, rejects = _detection_pairs(args)
    reports, per_image = [], []
    for t in thresholds:
        outcomes = match_all(pairs, t, args.fn_mode)
        reports.append(summarize(outcomes, t))
        per_image += [
            (o.image_id, t, o.tp, o.fp, o.fn, "" if o.matched_iou is None else o.matched_iou)
            for o in outcomes
        ]
    dio.write_eval_report(reports, out)
    if args.per_image:
        per_image.sort(key=lambda r: (r[0], r[1]))
        dio.write_table(("image_id", "threshold", "tp", "fp", "fn", "matched_iou"), per_image, args.per_image)
    for r in rejects:
        print(f"reject {r.image_id}: {r.reason}", file=sys.stderr)
    fields = {}
    for r in reports:
        tag = f"{r.threshold:g}"
        fields[f"precision@{tag}"] = r.precision
        fields[f"recall@{tag}"] = r.recall
        fields[f"mean_iou@{tag}"] = r.mean_iou
    _summary("eval-det", images=len(pairs), rejects=len(rejects), **fields, out=out)
    return EXIT_PARTIAL if rejects else EXIT_OK


def cmd_sweep(args) -> int:
    if args.thresholds:
        thresholds = _check_thresholds(args.thresholds)
    else:
        start, stop, step = args.grid
        if step <= 0 or stop < start:
            raise ConfigError(f"invalid grid {args.grid}")
        thresholds = _check_thresholds(sweep_grid(start, stop, step))
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ConfigError("thresholds must be strictly increasing")
    out = _require_parent(args.out)
    pairs, rejects = _detection_pairs(args)
    curve = threshold_sweep(pairs, thresholds, args.fn_mode)
    dio.write_curve(curve, out)
    _summary("sweep", images=len(pairs), rejects=len(rejects), points=len(curve), out=out)
    return EXIT_PARTIAL if rejects else EXIT_OK


# --------------------------------------------------------------------------- segmentation / classification


def cmd_eval_seg(args) -> int:
    manifest = _require_file(args.manifest, "manifest")
    if not args.pred_dir.is_dir():
        raise ConfigError(f"prediction directory not found: {args.pred_dir}")
    out = _require_parent(args.out)
    workers = _workers(args)
    entries = dio.load_manifest(manifest)

    def one(entry):
        if entry.mask_path is None:
            return dio.Reject(entry.image_id, "no GT mask")
        pred_path = args.pred_dir / f"{entry.image_id}.png"
        if not pred_path.is_file():
            return dio.Reject(entry.image_id, f"missing prediction {pred_path.name}")
        try:
            gt = dio.read_mask(entry.mask_path)
            pred = dio.read_mask(pred_path)
            return seg_confusion(pred, gt)
        except (OSError, ValueError) as exc:
            return dio.Reject(entry.image_id, str(exc))

    with _pool(workers) as pmap:
        results = list(pmap(one, entries))
    rejects = [r for r in results if isinstance(r, dio.Reject)]
    scored = [(e.image_id, c) for e, c in zip(entries, results) if not isinstance(c, dio.Reject)]
    rows = []
    for image_id, c in scored:
        m = seg_metrics(c)
        rows.append((image_id, *(getattr(m, k) for k in SEG_FIELDS), c.tp, c.fp, c.fn, c.tn))
    agg = None
    if scored:
        counts = [c for _, c in scored]
        agg = aggregate_seg(counts, args.average)
        total = counts[0]
        for c in counts[1:]:
            total = total + c
        rows.append((f"__{args.average}__", *(getattr(agg, k) for k in SEG_FIELDS), total.tp, total.fp, total.fn, total.tn))
    dio.write_table(("image_id", *SEG_FIELDS, "tp", "fp", "fn", "tn"), rows, out)
    for r in rejects:
        print(f"reject {r.image_id}: {r.reason}", file=sys.stderr)
    fields = {k: getattr(agg, k) for k in SEG_FIELDS} if agg else {}
    _summary("eval-seg", images=len(scored), rejects=len(rejects), average=args.average, **fields, out=out)
    return EXIT_PARTIAL if rejects else EXIT_OK


def cmd_eval_cls(args) -> int:
    manifest = _require_file(args.manifest, "manifest")
    pred = dio.read_labels(_require_file(args.pred, "prediction file"))
    out = _require_parent(args.out)
    entries = dio.load_manifest(manifest, check_paths=False)
    rejects, truth, predicted = [], [], []
    for e in entries:
        if e.label is None:
            rejects.append(dio.Reject(e.image_id, "no ground-truth label"))
        elif e.image_id not in pred:
            rejects.append(dio.Reject(e.image_id, "no prediction"))
        else:
            truth.append(e.label == args.positive)
            predicted.append(pred[e.image_id] == args.positive)
    if not truth:
        raise DatasetError("no image has both a ground-truth label and a prediction")
    c = label_confusion(truth, predicted)
    m = cls_metrics(c)
    dio.write_table((*CLS_FIELDS, "tp", "fp", "fn", "tn"), [(*m.as_dict().values(), c.tp, c.fp, c.fn, c.tn)], out)
    for r in rejects:
        print(f"reject {r.image_id}: {r.reason}", file=sys.stderr)
    _summary("eval-cls", images=len(truth), rejects=len(rejects), **m.as_dict(), out=out)
    return EXIT_PARTIAL if rejects else EXIT_OK


# --------------------------------------------------------------------------- augment / resize


def _augment_params(args) -> AugmentParams:
    try:
        turns = tuple(QuarterTurn.from_degrees(r) for r in args.rotations)
        return AugmentParams(args.target, args.margin, args.step, args.terminal_slack, turns)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _prepare_out_dir(path: Path) -> Path:
    if path.exists() and not path.is_dir():
        raise ConfigError(f"output path exists and is not a directory: {path}")
    if not path.parent.is_dir():
        raise ConfigError(f"parent of output directory does not exist: {path.parent}")
    return dio.prepare_output_dir(path)


def _write_rejects_in(out_dir: Path, rejects) -> None:
    path = out_dir / "rejects.csv"
    if rejects:
        dio.write_rejects(rejects, path)
    elif path.exists():
        path.unlink()


def cmd_augment(args) -> int:
    params = _augment_params(args)
    manifest = _require_file(args.manifest, "manifest")
    dets = None
    if args.roi_source == "dets":
        if args.dets is None:
            raise ConfigError("--roi-source dets requires --dets")
        dets = dio.read_detections(_require_file(args.dets, "detections file"))
    workers = _workers(args)
    entries = dio.load_manifest(manifest)
    out_dir = _prepare_out_dir(args.out)
    ext = args.image_format

    def one(entry):
        try:
            image = dio.read_image(entry.image_path)
            mask = dio.read_mask(entry.mask_path) if entry.mask_path is not None else None
            if args.roi_source == "mask":
                if mask is None:
                    return dio.Reject(entry.image_id, "no mask to derive the ROI from")
                roi = circumscribe(largest_component(mask) if args.largest_component else mask)
            else:
                found = dets.get(entry.image_id, [])
                if not found:
                    return dio.Reject(entry.image_id, "no detections")
                roi = select_primary(found).box
            h, w = image.shape[:2]
            pl = plan(entry.image_id, w, h, roi, params)
            results = []
            for sample in apply_plan(image, mask, pl, params):
                entry_out, box = dio.write_sample(dio.AugmentedItem(sample, entry.label), out_dir, ext)
                if mask is None:
                    box = project_box(roi, sample.record, params.target_side)
                results.append((entry_out, box))
            return results
        except NoForeground:
            return dio.Reject(entry.image_id, "mask has no foreground")
        except (OSError, LesionRoiError, ValueError) as exc:
            return dio.Reject(entry.image_id, str(exc))

    with _pool(workers) as pmap:
        results = list(pmap(one, entries))
    rejects = [r for r in results if isinstance(r, dio.Reject)]
    written = [item for r in results if not isinstance(r, dio.Reject) for item in r]
    out_entries = [e for e, _ in written]
    boxes = {e.image_id: b for e, b in written if b is not None}
    dio.finish_augmented(out_entries, boxes, out_dir)
    _write_rejects_in(out_dir, rejects)
    for r in rejects:
        print(f"reject {r.image_id}: {r.reason}", file=sys.stderr)
    n_src = len(entries) - len(rejects)
    _summary(
        "augment",
        images=n_src,
        outputs=len(out_entries),
        rejects=len(rejects),
        expansion=len(out_entries) / n_src if n_src else 0.0,
        out=out_dir,
    )
    return EXIT_PARTIAL if rejects else EXIT_OK


def cmd_resize(args) -> int:
    if args.width < 1 or args.height < 1:
        raise ConfigError(f"target size must be positive, got {args.width}x{args.height}")
    manifest = _require_file(args.manifest, "manifest")
    workers = _workers(args)
    entries = dio.load_manifest(manifest)
    out_dir = _prepare_out_dir(args.out)
    def one(entry):
        try:
            image = resize_image(dio.read_image(entry.image_path), args.width, args.height)
            image_path = out_dir / "images" / f"{entry.image_id}.{args.image_format}"
            dio.save_image(image, image_path)
            mask_path = None
            if entry.mask_path is not None:
                mask = resize_mask(dio.read_mask(entry.mask_path), args.width, args.height)
                mask_path = out_dir / "masks" / f"{entry.image_id}.png"
                dio.save_mask(mask, mask_path)
            return dio.ManifestEntry(entry.image_id, image_path, mask_path, entry.label)
        except (OSError, ValueError) as exc:
            return dio.Reject(entry.image_id, str(exc))

    with _pool(workers) as pmap:
        results = list(pmap(one, entries))
    rejects = [r for r in results if isinstance(r, dio.Reject)]
    done = [r for r in results if not isinstance(r, dio.Reject)]
    dio.write_manifest(done, out_dir / "manifest.csv")
    _write_rejects_in(out_dir, rejects)
    for r in rejects:
        print(f"reject {r.image_id}: {r.reason}", file=sys.stderr)
    _summary("resize", images=len(done), rejects=len(rejects), width=args.width, height=args.height, out=out_dir)
    return EXIT_PARTIAL if rejects else EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lesionroi", description="Lesion ROI dataset tooling and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help):
        p = sub.add_parser(name, help=help, description=help)
        p.set_defaults(func=func, usage=p.format_usage())
        return p

    def workers(p):
        p.add_argument("--workers", type=int, default=None, help=f"worker threads (default ${WORKERS_ENV} or 1)")

    p = add("convert-gt", cmd_convert_gt, "circumscribe a GT box around every mask in a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="GT table CSV")
    p.add_argument("--rejects", type=Path, help="CSV listing images without a GT box")
    p.add_argument("--largest-component", action="store_true", help="keep only the largest 4-connected blob")
    workers(p)

    def det_inputs(p):
        p.add_argument("--gt", type=Path, required=True, help="GT table CSV")
        p.add_argument("--dets", type=Path, required=True, help="detections JSON Lines")
        p.add_argument("--manifest", type=Path, help="restrict to (and require GT for) these images")
        p.add_argument("--fn-mode", choices=FN_MODES, default="no-detection")
        p.add_argument("--out", type=Path, required=True)

    p = add("eval-det", cmd_eval_det, "precision, recall and mean IoU of detections")
    det_inputs(p)
    p.add_argument("--iou", type=float, nargs="+", default=list(DEFAULT_THRESHOLDS))
    p.add_argument("--per-image", type=Path, help="optional per-image outcome CSV")

    p = add("sweep", cmd_sweep, "precision/recall/mean-IoU curve over IoU thresholds")
    det_inputs(p)
    p.add_argument("--thresholds", type=float, nargs="+")
    p.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "STEP"), default=[0.5, 0.95, 0.05])

    p = add("eval-seg", cmd_eval_seg, "pixel-wise segmentation metrics")
    p.add_argument("--manifest", type=Path, required=True, help="manifest with GT masks")
    p.add_argument("--pred-dir", type=Path, required=True, help="directory of <image_id>.png predicted masks")
    p.add_argument("--average", choices=AVERAGE_MODES, default="per-image")
    p.add_argument("--out", type=Path, required=True)
    workers(p)

    p = add("eval-cls", cmd_eval_cls, "binary classification metrics")
    p.add_argument("--manifest", type=Path, required=True, help="manifest with GT labels")
    p.add_argument("--pred", type=Path, required=True, help="image_id,label CSV of predictions")
    p.add_argument("--positive", choices=dio.LABELS, default="malignant")
    p.add_argument("--out", type=Path, required=True)

    p = add("augment", cmd_augment, "ROI-centred magnification and rotation augmentation")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--roi-source", choices=("mask", "dets"), default="mask")
    p.add_argument("--dets", type=Path)
    p.add_argument("--largest-component", action="store_true")
    p.add_argument("--target", type=int, default=AugmentParams.target_side)
    p.add_argument("--margin", type=float, default=AugmentParams.margin)
    p.add_argument("--step", type=float, default=AugmentParams.step)
    p.add_argument("--terminal-slack", type=float, default=AugmentParams.terminal_slack)
    p.add_argument("--rotations", type=int, nargs="+", default=[int(t) for t in ALL_TURNS])
    p.add_argument("--image-format", choices=("png", "jpg"), default="png")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    workers(p)

    p = add("resize", cmd_resize, "resize images (bilinear) and masks (nearest)")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--width", type=int, default=500)
    p.add_argument("--height", type=int, default=375)
    p.add_argument("--image-format", choices=("png", "jpg"), default="png")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    workers(p)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ManifestNotFound) as exc:
        print(f"lesionroi {args.command}: error: {exc}", file=sys.stderr)
        print(args.usage, end="", file=sys.stderr)
        return EXIT_CONFIG
    except (LesionRoiError, OSError) as exc:
        print(f"lesionroi {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


def main() -> None:
    sys.exit(run())
