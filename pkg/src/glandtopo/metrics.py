"""Object-level evaluation: detection F1, object Dice, object Hausdorff.

All three compare two label maps. A predicted object is a true positive iff
it covers more than half of its maximal-overlap ground-truth object and that
object has not already been claimed by a larger overlap.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .raster import as_labels, canonicalize


@dataclass
class ObjectMatch:
    gt_id: int      # 0 = unmatched
    pred_id: int    # 0 = unmatched
    overlap: int
    overlap_fraction: float
    is_tp: bool


@dataclass
class MetricsReport:
    f1: float
    precision: float
    recall: float
    obj_dice: float
    obj_hausdorff: float
    tp: int
    fp: int
    fn: int


def _prep(pred, gt):
    pred = canonicalize(as_labels(pred))
    gt = canonicalize(as_labels(gt))
    if pred.shape != gt.shape:
        raise ValueError(f"dimension mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def _intersection_table(pred, gt):
    """(n_gt+1) x (n_pred+1) pixel-count table, index 0 = background."""
    ng = int(gt.max())
    np_ = int(pred.max())
    idx = gt.astype(np.int64) * (np_ + 1) + pred.astype(np.int64)
    counts = np.bincount(idx.ravel(), minlength=(ng + 1) * (np_ + 1))
    return counts.reshape(ng + 1, np_ + 1)


def match_objects(pred, gt, criterion="gt-fraction"):
    """Greedy one-to-one matching of predicted objects to ground truth.

    criterion="gt-fraction" (default): TP iff intersection > 50% of the GT
    object's area. criterion="iou": TP iff IoU > 0.5.
    """
    if criterion not in ("gt-fraction", "iou"):
        raise ValueError(f"unknown criterion {criterion!r}")
    pred, gt = _prep(pred, gt)
    table = _intersection_table(pred, gt)
    ng, np_ = table.shape[0] - 1, table.shape[1] - 1
    gt_areas = table.sum(axis=1)
    pred_areas = table.sum(axis=0)

    candidates = []
    for j in range(1, np_ + 1):
        inter = table[1:, j]
        if ng == 0 or inter.max() == 0:
            candidates.append((0, j, 0))
            continue
        i = int(np.argmax(inter)) + 1  # argmax takes the smallest id on ties
        candidates.append((i, j, int(table[i, j])))

    # claim GT objects by descending overlap, pred id breaking ties
    order = sorted(range(len(candidates)),
                   key=lambda k: (-candidates[k][2], candidates[k][1]))
    claimed = set()
    matches = []
    matched_gt = set()
    for k in order:
        i, j, inter = candidates[k]
        if i == 0:
            matches.append(ObjectMatch(0, j, 0, 0.0, False))
            continue
        frac = inter / gt_areas[i]
        if criterion == "gt-fraction":
            hit = frac > 0.5
        else:
            union = gt_areas[i] + pred_areas[j] - inter
            hit = inter / union > 0.5
        if hit and i not in claimed:
            claimed.add(i)
            matched_gt.add(i)
            matches.append(ObjectMatch(i, j, inter, float(frac), True))
        else:
            matches.append(ObjectMatch(i, j, inter, float(frac), False))
    for i in range(1, ng + 1):
        if i not in matched_gt:
            matches.append(ObjectMatch(i, 0, 0, 0.0, False))
    matches.sort(key=lambda m: (m.pred_id == 0, m.pred_id, m.gt_id))
    return matches


def _counts(matches):
    tp = sum(m.is_tp for m in matches)
    fp = sum(1 for m in matches if m.pred_id > 0 and not m.is_tp)
    fn = sum(1 for m in matches if m.pred_id == 0)
    return tp, fp, fn


def object_f1(pred, gt, criterion="gt-fraction"):
    """(f1, precision, recall). Both maps empty counts as a perfect 1.0."""
    matches = match_objects(pred, gt, criterion)
    tp, fp, fn = _counts(matches)
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1, precision, recall


def _max_overlap_partner(table, i, axis):
    """Counterpart object id with maximal intersection, 0 if none."""
    inter = table[i, 1:] if axis == 0 else table[1:, i]
    if inter.size == 0 or inter.max() == 0:
        return 0
    return int(np.argmax(inter)) + 1


def object_dice(pred, gt):
    """Area-weighted two-sided Dice over maximal-overlap object pairs."""
    pred, gt = _prep(pred, gt)
    table = _intersection_table(pred, gt)
    ng, np_ = table.shape[0] - 1, table.shape[1] - 1
    if ng == 0 and np_ == 0:
        return 1.0
    gt_areas = table.sum(axis=1)
    pred_areas = table.sum(axis=0)

    def dice(inter, a, b):
        return 2.0 * inter / (a + b)

    side_gt = 0.0
    total_g = gt_areas[1:].sum()
    for i in range(1, ng + 1):
        j = _max_overlap_partner(table, i, axis=0)
        d = dice(table[i, j], gt_areas[i], pred_areas[j]) if j else 0.0
        side_gt += (gt_areas[i] / total_g) * d
    side_pred = 0.0
    total_p = pred_areas[1:].sum()
    for j in range(1, np_ + 1):
        i = _max_overlap_partner(table, j, axis=1)
        d = dice(table[i, j], gt_areas[i], pred_areas[j]) if i else 0.0
        side_pred += (pred_areas[j] / total_p) * d
    return 0.5 * (side_gt + side_pred)


def boundary_pixels(labels, lab):
    """Coordinates of `lab` pixels 4-adjacent to a different value or the border."""
    labels = np.asarray(labels)
    mask = labels == lab
    # a pixel is boundary if some 4-neighbor (out-of-bounds included) differs
    same_neighbor = np.ones_like(mask)
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        rolled = np.roll(labels, shift, axis=axis)
        edge = np.zeros_like(mask)
        if axis == 0:
            edge[0 if shift == 1 else -1, :] = True
        else:
            edge[:, 0 if shift == 1 else -1] = True
        same_neighbor &= (rolled == labels) & ~edge
    bnd = mask & ~same_neighbor
    return np.argwhere(bnd)


def _hausdorff(a, b):
    """Symmetric Hausdorff distance between two point sets (L2)."""
    ta, tb = cKDTree(a), cKDTree(b)
    d_ab = tb.query(a)[0].max()
    d_ba = ta.query(b)[0].max()
    return float(max(d_ab, d_ba))


def object_hausdorff(pred, gt):
    """Area-weighted two-sided Hausdorff over object boundary point sets.

    Objects without any overlapping counterpart pair with the counterpart of
    minimal Hausdorff distance; if the other map has no objects at all, the
    image diagonal is used as the fallback distance.
    """
    pred, gt = _prep(pred, gt)
    table = _intersection_table(pred, gt)
    ng, np_ = table.shape[0] - 1, table.shape[1] - 1
    if ng == 0 and np_ == 0:
        return 0.0
    gt_areas = table.sum(axis=1)
    pred_areas = table.sum(axis=0)
    diag = float(np.hypot(*pred.shape))
    gt_bnd = {i: boundary_pixels(gt, i) for i in range(1, ng + 1)}
    pred_bnd = {j: boundary_pixels(pred, j) for j in range(1, np_ + 1)}

    def side(n, other_n, bnd, other_bnd, areas, axis):
        total = 0.0
        weight_total = areas[1:].sum()
        for i in range(1, n + 1):
            partner = _max_overlap_partner(table, i, axis=axis)
            if partner:
                h = _hausdorff(bnd[i], other_bnd[partner])
            elif other_n:
                h = min(_hausdorff(bnd[i], other_bnd[j])
                        for j in range(1, other_n + 1))
            else:
                h = diag
            total += (areas[i] / weight_total) * h
        return total

    side_gt = side(ng, np_, gt_bnd, pred_bnd, gt_areas, axis=0) if ng else 0.0
    side_pred = side(np_, ng, pred_bnd, gt_bnd, pred_areas, axis=1) if np_ else 0.0
    return 0.5 * (side_gt + side_pred)


def evaluate(pred, gt, criterion="gt-fraction"):
    """All metrics for one image pair."""
    matches = match_objects(pred, gt, criterion)
    tp, fp, fn = _counts(matches)
    f1, precision, recall = object_f1(pred, gt, criterion)
    return MetricsReport(f1=f1, precision=precision, recall=recall,
                         obj_dice=object_dice(pred, gt),
                         obj_hausdorff=object_hausdorff(pred, gt),
                         tp=tp, fp=fp, fn=fn)
