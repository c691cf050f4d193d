"""From mask logits to semantic and panoptic maps, then scoring them.

Run with ``python3 demos/03_decoding_and_metrics.py``.
"""

# %% Hand-made logits for 3 queries on a 6x8 image with 2 categories.
import numpy as np

from tokenmask import (
    PanopticMap,
    Segment,
    SemanticMap,
    Thresholds,
    instance_decode,
    miou_metric,
    panoptic_decode,
    pq_metric,
    semantic_decode,
)

masks = np.full((3, 6, 8), -6.0)
masks[0, :, :4] = 6.0        # left half
masks[1, :, 4:] = 6.0        # right half
masks[2, 1:3, 1:3] = 9.0     # small blob inside the left half
classes = np.array([
    [0.0, 5.0, 0.0],         # category 1
    [5.0, 0.0, 0.0],         # category 0
    [0.0, 6.0, 0.0],         # category 1, more confident
])

# %% Semantic decoding marginalizes over queries.
sem = semantic_decode(masks, classes)
print(sem.category)

# %% Panoptic decoding gives every pixel to one query. With the default overlap
# threshold the left-half query keeps 20/24 of its mask and survives.
pan = panoptic_decode(masks, classes, Thresholds())
print(pan.segment_id)
for s in pan.segments:
    print(" ", s)

# %% Instances are ranked by class score times mask quality.
for inst in instance_decode(masks, classes, top_k=3):
    print(f"query {inst.query} category {inst.category} score {inst.score:.3f} area {inst.mask.sum()}")

# %% Scoring against a ground truth whose blob reaches one row lower.
grid = pan.segment_id.copy()
grid[3, 1:3] = 3
gt = PanopticMap(grid, [Segment(1, 1, True, 18), Segment(2, 0, True, 24), Segment(3, 1, True, 6)])
result = pq_metric(pan, gt)
for cat, v in result.per_category.items():
    print(f"category {cat}: PQ {v.pq:.3f} SQ {v.sq:.3f} RQ {v.rq:.3f}")

# Both left segments are category 1, so the semantic view is unchanged.
gt_sem = SemanticMap(np.array([0, 1, 0, 1])[grid])  # segment id -> category
print("mIoU", miou_metric(sem, gt_sem, K=2))

# %% Maps serialize to a flat row-major JSON form.
print(pan.to_json()[:120], "...")
