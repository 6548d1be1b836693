"""Bounding-box average precision.

Predictions are visited in descending score order. A prediction becomes a
true positive when it can be added to the current matching, possibly by
re-routing earlier matches along an augmenting path, so that every gt box is
used at most once and only pairs with IoU >= threshold are allowed. This
greedy over a transversal matroid yields the lexicographically best
true-positive sequence and, with it, the largest attainable recall at every
rank.
"""
from __future__ import annotations

import numpy as np

DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.96, 0.05), 2).tolist())


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) xyxy boxes."""
    a = np.asarray(a, np.float64).reshape(-1, 4)
    b = np.asarray(b, np.float64).reshape(-1, 4)
    x0 = np.maximum(a[:, None, 0], b[None, :, 0])
    y0 = np.maximum(a[:, None, 1], b[None, :, 1])
    x1 = np.minimum(a[:, None, 2], b[None, :, 2])
    y1 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(x1 - x0, 0, None) * np.clip(y1 - y0, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def _order(scores) -> np.ndarray:
    scores = np.asarray(scores, np.float64)
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    return np.argsort(-scores, kind="stable")


def match_tp(pred_boxes, scores, gt_boxes, threshold: float) -> np.ndarray:
    """True-positive flags for predictions, in descending score order."""
    order = _order(scores)
    ok = iou_matrix(pred_boxes, gt_boxes)[order] >= threshold
    owner = [-1] * ok.shape[1]   # gt -> prediction rank

    def augment(i, seen):
        for g in np.flatnonzero(ok[i]):
            if g in seen:
                continue
            seen.add(g)
            if owner[g] < 0 or augment(owner[g], seen):
                owner[g] = i
                return True
        return False

    return np.array([augment(i, set()) for i in range(len(order))], bool)


def ap_from_tp(tp: np.ndarray, n_gt: int) -> float:
    """All-point interpolated area under the precision/recall curve."""
    tp = np.asarray(tp, bool)
    if n_gt == 0:
        return 1.0 if len(tp) == 0 else 0.0
    if len(tp) == 0:
        return 0.0
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, len(tp) + 1)
    recall = ctp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * envelope))


def average_precision(pred, gt, thresholds=DEFAULT_THRESHOLDS) -> dict:
    """AP of ``pred = [(bbox, score), ...]`` against ``gt = [bbox, ...]``.

    Returns ``{"per_threshold": {t: ap}, "ap_at_05": ..., "mean": ...}``.
    """
    boxes = np.array([p[0] for p in pred], np.float64).reshape(-1, 4)
    scores = np.array([p[1] for p in pred], np.float64)
    gt = np.asarray(gt, np.float64).reshape(-1, 4)
    per = {float(t): ap_from_tp(match_tp(boxes, scores, gt, t), len(gt)) for t in thresholds}
    return _summary(per)


def average_precision_dataset(instances, thresholds=DEFAULT_THRESHOLDS) -> dict:
    """AP pooled over images: ``instances`` is a sequence of ``(pred, gt)`` pairs."""
    per = {}
    for t in thresholds:
        all_scores, all_tp, n_gt = [], [], 0
        for pred, gt in instances:
            boxes = np.array([p[0] for p in pred], np.float64).reshape(-1, 4)
            scores = np.array([p[1] for p in pred], np.float64)
            gt = np.asarray(gt, np.float64).reshape(-1, 4)
            all_tp.append(match_tp(boxes, scores, gt, t))
            all_scores.append(scores[_order(scores)])
            n_gt += len(gt)
        scores = np.concatenate(all_scores) if all_scores else np.zeros(0)
        tp = np.concatenate(all_tp) if all_tp else np.zeros(0, bool)
        per[float(t)] = ap_from_tp(tp[_order(scores)], n_gt)
    return _summary(per)


def _summary(per: dict) -> dict:
    return {"per_threshold": per, "ap_at_05": per.get(0.5), "mean": float(np.mean(list(per.values())))}
