"""Pixel-level evaluation for binary road segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion-matrix counts with road as the positive class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred: np.ndarray, target: np.ndarray) -> ConfusionCounts:
    """Count tp/fp/fn/tn between two binary masks.

    Args:
        pred: (H, W) array with values in {0, 1}.
        target: (H, W) array with values in {0, 1}.

    Returns:
        ConfusionCounts accumulated over all pixels.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    for name, arr in (("pred", pred), ("target", target)):
        vals = np.unique(arr)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError(f"{name} must be binary, got values {vals}")
    p = pred.astype(bool)
    t = target.astype(bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
    )


def _ratio(num: int, den: int, empty: float) -> float:
    """num/den, with `empty` returned when the denominator is zero."""
    if den == 0:
        return empty
    return num / den


def scores(counts: ConfusionCounts) -> dict[str, float]:
    """Derive IoU / precision / recall / F1 from confusion counts.

    When neither mask contains any road pixel (tp + fp + fn == 0) every
    road score is defined as 1.0: an empty prediction of an empty target
    is a perfect one.  Otherwise a zero denominator yields 0.0 for that
    score only.

    Returns:
        dict with iou_road, iou_bg, miou, precision, recall, f1.
    """
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    if tp + fp + fn == 0:
        iou_road = precision = recall = f1 = 1.0
    else:
        iou_road = _ratio(tp, tp + fp + fn, 0.0)
        precision = _ratio(tp, tp + fp, 0.0)
        recall = _ratio(tp, tp + fn, 0.0)
        if precision + recall == 0:
            f1 = 0.0
        else:
            f1 = 2 * precision * recall / (precision + recall)
    iou_bg = 1.0 if tn + fn + fp == 0 else _ratio(tn, tn + fn + fp, 0.0)
    return {
        "iou_road": iou_road,
        "iou_bg": iou_bg,
        "miou": (iou_road + iou_bg) / 2.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


def evaluate_masks(pred: np.ndarray, target: np.ndarray) -> dict[str, float]:
    """confusion() followed by scores(), for one mask pair."""
    return scores(confusion(pred, target))
