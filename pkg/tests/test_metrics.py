import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lesionroi.metrics import (
    ConfusionCounts,
    aggregate_seg,
    cls_metrics,
    label_confusion,
    seg_confusion,
    seg_metrics,
)

counts = st.builds(
    ConfusionCounts,
    st.integers(0, 10_000),
    st.integers(0, 10_000),
    st.integers(0, 10_000),
    st.integers(0, 10_000),
).filter(lambda c: c.total > 0)


def mcc_oracle(tp, fp, fn, tn):
    """Pearson correlation of the two indicator vectors, built sample by sample."""
    truth = np.array([1] * tp + [0] * fp + [1] * fn + [0] * tn, float)
    pred = np.array([1] * tp + [1] * fp + [0] * fn + [0] * tn, float)
    return float(np.corrcoef(truth, pred)[0, 1])


def test_seg_confusion_identity_and_complement(rng):
    gt = rng.random((20, 20)) > 0.5
    c = seg_confusion(gt, gt)
    assert c.fp == c.fn == 0
    c = seg_confusion(~gt, gt)
    assert c.tp == c.tn == 0


def test_seg_confusion_constructed():
    gt = np.zeros((20, 20), bool)
    pred = np.zeros((20, 20), bool)
    gt[0:5, :] = True           # 100 pixels
    pred[0:5, 0:10] = True      # 50 of them overlap gt
    pred[10:15, 0:10] = True    # 50 outside gt
    assert gt.sum() == pred.sum() == 100
    assert (gt & pred).sum() == 50
    c = seg_confusion(pred, gt)
    assert (c.tp, c.fp, c.fn, c.tn) == (50, 50, 50, 250)
    m = seg_metrics(c)
    assert m.jaccard == pytest.approx(1 / 3)
    assert m.dice == pytest.approx(0.5)
    assert m.dice == pytest.approx(2 * m.jaccard / (1 + m.jaccard))


def test_seg_confusion_shape_mismatch():
    with pytest.raises(ValueError):
        seg_confusion(np.zeros((3, 3)), np.zeros((3, 4)))


def test_seg_metrics_perfect_and_empty_prediction():
    m = seg_metrics(ConfusionCounts(40, 0, 0, 60))
    assert m.as_dict() == dict(accuracy=1.0, dice=1.0, jaccard=1.0, sensitivity=1.0, specificity=1.0)
    assert m.degenerate == ()
    m = seg_metrics(ConfusionCounts(0, 0, 40, 60))
    assert m.sensitivity == 0 and m.jaccard == 0


def test_seg_metrics_degenerate_flag():
    m = seg_metrics(ConfusionCounts(0, 0, 0, 100))
    assert m.dice == m.jaccard == m.sensitivity == 1.0
    assert set(m.degenerate) == {"dice", "jaccard", "sensitivity"}


def test_metrics_reject_all_zero():
    with pytest.raises(ValueError):
        seg_metrics(ConfusionCounts(0, 0, 0, 0))
    with pytest.raises(ValueError):
        cls_metrics(ConfusionCounts(0, 0, 0, 0))


@given(counts)
def test_dice_jaccard_identity_exact(c):
    m = seg_metrics(c, exact=True)
    assert isinstance(m.dice, Fraction)
    assert m.dice == 2 * m.jaccard / (1 + m.jaccard)


@given(counts)
def test_accuracy_invariant_under_label_swap(c):
    swapped = ConfusionCounts(c.tn, c.fn, c.fp, c.tp)
    assert seg_metrics(c).accuracy == seg_metrics(swapped).accuracy


def test_mcc_examples():
    assert cls_metrics(ConfusionCounts(7, 7, 7, 7)).mcc == 0
    perfect = cls_metrics(ConfusionCounts(30, 0, 0, 70))
    assert perfect.mcc == 1 and perfect.f1 == 1
    m = cls_metrics(ConfusionCounts(tp=90, fp=20, fn=10, tn=80))
    assert m.mcc == pytest.approx(7000 / math.sqrt(110 * 100 * 100 * 90), abs=1e-12)
    assert m.mcc == pytest.approx(mcc_oracle(90, 20, 10, 80), abs=1e-9)
    assert m.mcc == pytest.approx(0.703526, abs=1e-6)


@given(counts)
def test_mcc_range_and_sign_flip(c):
    m = cls_metrics(c).mcc
    assert -1 <= m <= 1
    # flipping the predicted label swaps tp<->fn and fp<->tn
    flipped = cls_metrics(ConfusionCounts(c.fn, c.tn, c.tp, c.fp)).mcc
    assert flipped == pytest.approx(-m, abs=1e-12)


def test_cls_metrics_formulas():
    m = cls_metrics(ConfusionCounts(tp=90, fp=20, fn=10, tn=80))
    assert m.accuracy == pytest.approx(170 / 200)
    assert m.precision == pytest.approx(90 / 110)
    assert m.sensitivity == pytest.approx(90 / 100)
    assert m.specificity == pytest.approx(80 / 100)
    assert m.f1 == pytest.approx(2 * (90 / 110) * 0.9 / (90 / 110 + 0.9))


def test_aggregate_modes():
    a = ConfusionCounts(10, 0, 0, 90)
    b = ConfusionCounts(0, 0, 10, 90)
    per_image = aggregate_seg([a, b], "per-image")
    pooled = aggregate_seg([a, b], "pooled")
    assert per_image.sensitivity == pytest.approx(0.5)
    assert pooled.sensitivity == pytest.approx(0.5)
    assert per_image.dice == pytest.approx(0.5)
    assert pooled.dice == pytest.approx(20 / 30)
    with pytest.raises(ValueError):
        aggregate_seg([a], "mean")


def test_label_confusion():
    c = label_confusion([True, True, False, False], [True, False, True, False])
    assert (c.tp, c.fn, c.fp, c.tn) == (1, 1, 1, 1)
