"""Lesion ROI toolkit: mask-to-box ground truth, detection evaluation and ROI-driven augmentation."""
from .augment import AugmentParams, AugmentationPlan, apply_plan, magnification_ladder, plan, resize_image
from .detection_eval import Detection, EvalReport, evaluate, match_image, select_primary, threshold_sweep
from .geometry import Box, QuarterTurn, clamp_window, intersect, iou, rotate_box
from .mask_ops import circumscribe, crop_mask, resize_mask, rotate_mask
from .metrics import ConfusionCounts, cls_metrics, seg_confusion, seg_metrics

__version__ = "0.1.0"

__all__ = [
    "AugmentParams", "AugmentationPlan", "apply_plan", "magnification_ladder", "plan", "resize_image",
    "Detection", "EvalReport", "evaluate", "match_image", "select_primary", "threshold_sweep",
    "Box", "QuarterTurn", "clamp_window", "intersect", "iou", "rotate_box",
    "circumscribe", "crop_mask", "resize_mask", "rotate_mask",
    "ConfusionCounts", "cls_metrics", "seg_confusion", "seg_metrics",
]
