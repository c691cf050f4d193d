"""Reference implementations written with plain Python loops.

These deliberately avoid the package's code paths (and numpy vector ops
where practical) so they can serve as independent checks.
"""

import math


def gemm_loops(a, b):
    """Triple loop over nested lists / arrays, accumulating in Python floats."""
    nb, p, r = len(a), len(a[0]), len(a[0][0])
    s = len(b[0][0])
    out = [[[0.0] * s for _ in range(p)] for _ in range(nb)]
    for bi in range(nb):
        for i in range(p):
            for j in range(s):
                acc = 0.0
                for k in range(r):
                    acc += float(a[bi][i][k]) * float(b[bi][k][j])
                out[bi][i][j] = acc
    return out


def bilinear_sample(img, dst_h, dst_w, y, x):
    """Closed-form half-pixel bilinear value of output pixel (y, x) of a 2-D image."""
    src_h, src_w = len(img), len(img[0])

    def coord(i, src, dst):
        c = (i + 0.5) * src / dst - 0.5
        return min(max(c, 0.0), src - 1)

    cy, cx = coord(y, src_h, dst_h), coord(x, src_w, dst_w)
    y0, x0 = int(math.floor(cy)), int(math.floor(cx))
    y1, x1 = min(y0 + 1, src_h - 1), min(x0 + 1, src_w - 1)
    fy, fx = cy - y0, cx - x0
    return ((1 - fy) * (1 - fx) * img[y0][x0] + (1 - fy) * fx * img[y0][x1]
            + fy * (1 - fx) * img[y1][x0] + fy * fx * img[y1][x1])


def bilinear_image(img, dst_h, dst_w):
    return [[bilinear_sample(img, dst_h, dst_w, y, x) for x in range(dst_w)] for y in range(dst_h)]


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def softmax_row(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def argmax_first(values):
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def semantic_oracle(masks, classes):
    """Per-pixel sum over queries of class prob * mask prob, then argmax."""
    nq, h, w = len(masks), len(masks[0]), len(masks[0][0])
    probs = [softmax_row(list(map(float, c))) for c in classes]
    k = len(probs[0]) - 1
    out = [[0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            scores = [sum(probs[q][c] * sigmoid(float(masks[q][y][x])) for q in range(nq))
                      for c in range(k)]
            out[y][x] = argmax_first(scores)
    return out


def panoptic_assignment_oracle(masks, classes, cls_thr=0.5, mask_thr=0.5):
    """Winning query per pixel (-1 = void) before area filtering."""
    nq, h, w = len(masks), len(masks[0]), len(masks[0][0])
    probs = [softmax_row(list(map(float, c))) for c in classes]
    k = len(probs[0]) - 1
    kept = []
    for q in range(nq):
        label = argmax_first(probs[q][:k])
        if argmax_first(probs[q]) != k and probs[q][label] >= cls_thr:
            kept.append((q, probs[q][label]))
    out = [[-1] * w for _ in range(h)]
    if not kept:
        return out
    for y in range(h):
        for x in range(w):
            vals = [score * sigmoid(float(masks[q][y][x])) for q, score in kept]
            q = kept[argmax_first(vals)][0]
            if sigmoid(float(masks[q][y][x])) >= mask_thr:
                out[y][x] = q
    return out


def pq_bruteforce(pred_grid, pred_cats, gt_grid, gt_cats):
    """Exhaustive IoU matcher over every (gt, pred) pair.

    ``*_cats`` map segment id -> category. Void (id 0) in the ground truth is
    removed from unions; a prediction mostly on void is not a false positive.
    Returns {category: (pq, sq, rq)}.
    """
    h, w = len(gt_grid), len(gt_grid[0])
    pix = [(y, x) for y in range(h) for x in range(w)]

    def area(grid, sid):
        return sum(1 for y, x in pix if grid[y][x] == sid)

    matches = {}
    for g, gc in gt_cats.items():
        for p, pc in pred_cats.items():
            if gc != pc:
                continue
            inter = sum(1 for y, x in pix if gt_grid[y][x] == g and pred_grid[y][x] == p)
            void = sum(1 for y, x in pix if gt_grid[y][x] == 0 and pred_grid[y][x] == p)
            union = area(gt_grid, g) + area(pred_grid, p) - inter - void
            iou = inter / union if union else 0.0
            if iou > 0.5:
                matches[(g, p)] = iou
    out = {}
    for cat in set(gt_cats.values()) | set(pred_cats.values()):
        tp_pairs = [(g, p) for (g, p) in matches if gt_cats[g] == cat]
        tp = len(tp_pairs)
        fn = sum(1 for g, c in gt_cats.items() if c == cat and all(g != m[0] for m in tp_pairs))
        fp = 0
        for p, c in pred_cats.items():
            if c != cat or any(p == m[1] for m in tp_pairs):
                continue
            void = sum(1 for y, x in pix if gt_grid[y][x] == 0 and pred_grid[y][x] == p)
            if void / area(pred_grid, p) > 0.5:
                continue
            fp += 1
        if tp + fp + fn == 0:
            continue
        iou_sum = sum(matches[m] for m in tp_pairs)
        denom = tp + fp / 2 + fn / 2
        out[cat] = (iou_sum / denom, iou_sum / tp if tp else 0.0, tp / denom)
    return out


def panoptic_oracle(masks, classes, cls_thr=0.5, mask_thr=0.5, overlap=0.8, min_area=0):
    """Full panoptic merge (every category a thing), ids relabeled by scan order."""
    assign = panoptic_assignment_oracle(masks, classes, cls_thr, mask_thr)
    h, w = len(assign), len(assign[0])
    probs = [softmax_row(list(map(float, c))) for c in classes]
    k = len(probs[0]) - 1
    dropped = set()
    for q in {v for row in assign for v in row if v >= 0}:
        area = sum(1 for row in assign for v in row if v == q)
        original = sum(1 for y in range(h) for x in range(w)
                       if sigmoid(float(masks[q][y][x])) >= mask_thr)
        if area < min_area or area / original < overlap:
            dropped.add(q)
    out = [[0] * w for _ in range(h)]
    ids, cats = {}, {}
    for y in range(h):
        for x in range(w):
            q = assign[y][x]
            if q < 0 or q in dropped:
                continue
            if q not in ids:
                ids[q] = len(ids) + 1
                cats[ids[q]] = argmax_first(probs[q][:k])
            out[y][x] = ids[q]
    return out, cats
