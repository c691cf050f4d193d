"""Panoptic quality and mean IoU.

PQ follows the usual panoptic definition: a predicted and a ground-truth
segment of the same category match when IoU > 0.5 (such a match is
necessarily unique), and per category

    PQ = sum(IoU over matches) / (TP + FP/2 + FN/2) = SQ * RQ.

Pixels that are void in the ground truth are removed from the union, and a
predicted segment lying mostly (> 50 %) on ground-truth void is not counted
as a false positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decode import PanopticMap, SemanticMap
from .errors import ShapeError


@dataclass(frozen=True)
class CategoryPQ:
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    iou_sum: float


@dataclass(frozen=True)
class PQResult:
    per_category: dict[int, CategoryPQ]
    pq: float
    sq: float
    rq: float

    @property
    def num_categories(self) -> int:
        return len(self.per_category)


def _pair_counts(a: np.ndarray, b: np.ndarray) -> dict[tuple[int, int], int]:
    pairs = np.stack([a.ravel(), b.ravel()], axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    return {(int(x), int(y)): int(c) for (x, y), c in zip(uniq, counts)}


def pq_metric(pred: PanopticMap, gt: PanopticMap, categories=None) -> PQResult:
    """Per-category and averaged (PQ, SQ, RQ).

    Categories with no segment in either map are undefined and excluded from
    the averages; if none remain the averages are NaN. ``categories``
    optionally restricts evaluation to a vocabulary.
    """
    if pred.shape != gt.shape:
        raise ShapeError(f"map extents differ: pred {pred.shape} vs gt {gt.shape}")
    gt_segs = {s.id: s for s in gt.segments}
    pred_segs = {s.id: s for s in pred.segments}
    overlap = _pair_counts(gt.segment_id, pred.segment_id)

    matched_gt, matched_pred = set(), set()
    stats: dict[int, list] = {}

    def bucket(cat):
        return stats.setdefault(cat, [0, 0, 0, 0.0])  # tp, fp, fn, iou_sum

    for (g, p), inter in overlap.items():
        if g == 0 or p == 0:
            continue
        gs, ps = gt_segs[g], pred_segs[p]
        if gs.category != ps.category:
            continue
        union = ps.area + gs.area - inter - overlap.get((0, p), 0)
        iou = inter / union
        if iou > 0.5:
            matched_gt.add(g)
            matched_pred.add(p)
            b = bucket(gs.category)
            b[0] += 1
            b[3] += iou

    for g, gs in gt_segs.items():
        if g not in matched_gt:
            bucket(gs.category)[2] += 1
    for p, ps in pred_segs.items():
        if p in matched_pred:
            continue
        if overlap.get((0, p), 0) / ps.area > 0.5:
            continue
        bucket(ps.category)[1] += 1

    if categories is not None:
        allowed = set(categories)
        stats = {c: v for c, v in stats.items() if c in allowed}

    per_category = {}
    for cat in sorted(stats):
        tp, fp, fn, iou_sum = stats[cat]
        if tp + fp + fn == 0:
            continue
        denom = tp + 0.5 * fp + 0.5 * fn
        sq = iou_sum / tp if tp else 0.0
        rq = tp / denom
        per_category[cat] = CategoryPQ(iou_sum / denom, sq, rq, tp, fp, fn, iou_sum)

    if not per_category:
        return PQResult({}, float("nan"), float("nan"), float("nan"))
    vals = list(per_category.values())
    return PQResult(
        per_category,
        float(np.mean([v.pq for v in vals])),
        float(np.mean([v.sq for v in vals])),
        float(np.mean([v.rq for v in vals])),
    )


def miou_metric(pred: SemanticMap, gt: SemanticMap, K: int, ignore_index: int | None = None) -> float:
    """Mean IoU over categories present in either map.

    Pixels where ``gt == ignore_index`` are excluded. Returns NaN when no
    category is present.
    """
    p, g = pred.category, gt.category
    if p.shape != g.shape:
        raise ShapeError(f"map extents differ: pred {p.shape} vs gt {g.shape}")
    valid = np.ones_like(g, dtype=bool) if ignore_index is None else g != ignore_index
    p, g = p[valid], g[valid]
    for name, arr in (("pred", p), ("gt", g)):
        if arr.size and (arr.min() < 0 or arr.max() >= K):
            raise ValueError(f"{name} contains categories outside [0, {K})")
    ious = []
    for k in range(K):
        pk, gk = p == k, g == k
        union = int(np.sum(pk | gk))
        if union:
            ious.append(np.sum(pk & gk) / union)
    return float(np.mean(ious)) if ious else float("nan")
