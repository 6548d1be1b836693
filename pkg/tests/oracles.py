"""Slow, obviously-correct reference implementations used by the tests."""
import itertools


def iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def ap_of_ranking(tp, n_gt):
    """Area under the interpolated precision/recall curve, computed point by point."""
    if n_gt == 0:
        return 1.0 if not tp else 0.0
    points = []
    hits = 0
    for k, t in enumerate(tp, 1):
        hits += t
        points.append((hits / n_gt, hits / k))
    area, last_recall = 0.0, 0.0
    for i, (r, _) in enumerate(points):
        best = max(p for _, p in points[i:])
        area += (r - last_recall) * best
        last_recall = r
    return area


def exhaustive_ap(pred, gt, threshold):
    """Best AP over every one-to-one assignment of predictions to gt boxes with IoU >= threshold."""
    ranked = sorted(range(len(pred)), key=lambda i: -pred[i][1])
    options = []
    for i in ranked:
        options.append([None] + [g for g in range(len(gt)) if iou(pred[i][0], gt[g]) >= threshold])
    best = ap_of_ranking([False] * len(pred), len(gt))
    for choice in itertools.product(*options):
        used = [g for g in choice if g is not None]
        if len(used) != len(set(used)):
            continue
        best = max(best, ap_of_ranking([g is not None for g in choice], len(gt)))
    return best
