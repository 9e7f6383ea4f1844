"""Evaluation metrics: precision at EER, adaptive-threshold F-measure,
Jaccard overlap, mIoU, localization hits and detection AP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, EmptyGroundTruth
from .io import SaliencyMap
from .validation import check_same_shape

F_MEASURE_ETA_SQ = 0.3
AP_RECALL_POINTS = np.linspace(0.0, 1.0, 11)
DETECTION_IOU = 0.5
TOLERANCE_PIXELS = 18


@dataclass(frozen=True)
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray


def pr_curve(smap: SaliencyMap, gt: np.ndarray) -> PRCurve:
    """Precision/recall when binarizing at every distinct map value (>= t)."""
    gt = np.asarray(gt, dtype=bool)
    check_same_shape(smap.values, gt, "map and ground truth")
    if not gt.any():
        raise EmptyGroundTruth("ground truth has no positive pixels")
    values = smap.values.ravel()
    truth = gt.ravel()
    order = np.argsort(-values, kind="stable")
    sorted_vals = values[order]
    tp_cum = np.cumsum(truth[order])
    n_pos = truth.sum()
    # last index of each distinct value in the descending order
    boundary = np.nonzero(np.diff(sorted_vals))[0]
    last = np.concatenate([boundary, [values.size - 1]])
    thresholds = sorted_vals[last]
    pred_counts = last + 1
    tp = tp_cum[last]
    precision = tp / pred_counts
    recall = tp / n_pos
    # ascending thresholds
    return PRCurve(thresholds[::-1], precision[::-1], recall[::-1])


def precision_at_eer(smap: SaliencyMap, gt: np.ndarray) -> float:
    """Precision where it is closest to recall; ties pick the higher threshold."""
    curve = pr_curve(smap, gt)
    diff = np.abs(curve.precision - curve.recall)
    best = diff.min()
    idx = np.flatnonzero(diff == best).max()
    return float(curve.precision[idx])


def f_measure(smap: SaliencyMap, gt: np.ndarray,
              eta_sq: float = F_MEASURE_ETA_SQ) -> float:
    """F-measure after binarizing strictly above twice the map's mean."""
    gt = np.asarray(gt, dtype=bool)
    check_same_shape(smap.values, gt, "map and ground truth")
    if not gt.any():
        raise EmptyGroundTruth("ground truth has no positive pixels")
    threshold = min(2.0 * float(smap.values.mean()), 1.0)
    pred = smap.values > threshold
    return f_from_counts(np.count_nonzero(pred & gt), np.count_nonzero(pred),
                         np.count_nonzero(gt), eta_sq)


def f_from_counts(tp: int, n_pred: int, n_gt: int, eta_sq: float) -> float:
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    if precision == 0.0 and recall == 0.0:
        return 0.0
    return (1.0 + eta_sq) * precision * recall / (eta_sq * precision + recall)


def jaccard(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """Intersection over union of two boolean masks; both empty counts as 1."""
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    check_same_shape(a, b, "masks")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def miou(pred_labels, gt_labels, n_classes: int) -> tuple[np.ndarray, float]:
    """Per-class IoU (TP/(TP+FP+FN)) accumulated over images, and its mean.

    Classes never seen in either prediction or ground truth are excluded
    from the mean.
    """
    tp = np.zeros(n_classes, dtype=np.int64)
    fp = np.zeros(n_classes, dtype=np.int64)
    fn = np.zeros(n_classes, dtype=np.int64)
    for pred, gt in zip(pred_labels, gt_labels):
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise DimMismatch("label maps differ in shape")
        for c in range(n_classes):
            p = pred == c
            g = gt == c
            tp[c] += np.count_nonzero(p & g)
            fp[c] += np.count_nonzero(p & ~g)
            fn[c] += np.count_nonzero(~p & g)
    denom = tp + fp + fn
    iou = np.where(denom > 0, tp / np.maximum(denom, 1), np.nan)
    present = denom > 0
    mean = float(iou[present].mean()) if present.any() else 0.0
    return iou, mean


def _box_bounds(box) -> tuple[float, float, float, float]:
    x, y, w, h = box
    return x, y, x + w - 1, y + h - 1


def localization_hit(pt: tuple[float, float], gt_boxes, mode: str = "exact") -> bool:
    """Whether a predicted point falls in any box (optionally dilated 18 px)."""
    margin = 0 if mode == "exact" else TOLERANCE_PIXELS
    px, py = pt
    for box in gt_boxes:
        x0, y0, x1, y1 = _box_bounds(box)
        if x0 - margin <= px <= x1 + margin and y0 - margin <= py <= y1 + margin:
            return True
    return False


def box_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = _box_bounds(a)
    bx0, by0, bx1, by1 = _box_bounds(b)
    iw = min(ax1, bx1) - max(ax0, bx0) + 1
    ih = min(ay1, by1) - max(ay0, by0) + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union


def detection_ap(ranked_boxes, gt_boxes, iou_threshold: float = DETECTION_IOU) -> float:
    """11-point interpolated AP with greedy best-IoU matching in rank order."""
    if not gt_boxes:
        return 0.0
    matched = [False] * len(gt_boxes)
    hits = []
    for box in ranked_boxes:
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gt_boxes):
            if matched[j]:
                continue
            iou = box_iou(box, gt)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou > iou_threshold:
            matched[best_j] = True
            hits.append(1)
        else:
            hits.append(0)
    if not hits:
        return 0.0
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    recall = tp / len(gt_boxes)
    return interpolated_ap(precision, recall)


def interpolated_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    total = 0.0
    for r in AP_RECALL_POINTS:
        at_least = precision[recall >= r]
        total += at_least.max() if at_least.size else 0.0
    return float(total / AP_RECALL_POINTS.size)
