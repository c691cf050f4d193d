"""Mask-classification decoding: semantic, panoptic and instance outputs.

All decoders work on a single image: mask logits ``[Qn,H,W]`` and class
logits ``[Qn,K+1]`` whose last slot is the no-object class. Mask logits
enter only through their sigmoid. Ties always resolve to the smaller
index (query or category).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import elementwise

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Thresholds:
    cls: float = 0.5
    mask: float = 0.5
    overlap: float = 0.8
    min_area: int = 0

    def __post_init__(self):
        for name in ("cls", "mask", "overlap"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"threshold {name}={v} outside [0, 1]")
        if self.min_area < 0:
            raise ConfigError(f"min_area must be >= 0, got {self.min_area}")


@dataclass(frozen=True)
class Segment:
    id: int
    category: int
    is_thing: bool
    area: int


@dataclass
class PanopticMap:
    """Segment-id grid (0 = void) plus one record per nonzero id."""

    segment_id: np.ndarray
    segments: list[Segment] = field(default_factory=list)

    def __post_init__(self):
        self.segment_id = np.asarray(self.segment_id, dtype=np.int32)
        if self.segment_id.ndim != 2:
            raise ShapeError(f"segment_id must be a 2-D grid, got shape {self.segment_id.shape}")
        ids, counts = np.unique(self.segment_id, return_counts=True)
        grid_areas = {int(i): int(c) for i, c in zip(ids, counts) if i != 0}
        seg_ids = [s.id for s in self.segments]
        if len(set(seg_ids)) != len(seg_ids) or 0 in seg_ids:
            raise ValueError(f"segment ids must be unique and nonzero, got {seg_ids}")
        if set(seg_ids) != set(grid_areas):
            raise ValueError(f"grid ids {sorted(grid_areas)} != segment ids {sorted(seg_ids)}")
        for s in self.segments:
            if grid_areas[s.id] != s.area:
                raise ValueError(f"segment {s.id}: area {s.area} != grid count {grid_areas[s.id]}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.segment_id.shape

    def canonical(self) -> PanopticMap:
        """Relabel ids 1, 2, ... in order of each segment's first pixel (row-major)."""
        flat = self.segment_id.ravel()
        ids, first = np.unique(flat, return_index=True)
        order = [int(i) for i in ids[np.argsort(first)] if i != 0]
        remap = {old: new for new, old in enumerate(order, start=1)}
        lut = np.zeros(int(flat.max(initial=0)) + 1, dtype=np.int32)
        for old, new in remap.items():
            lut[old] = new
        by_id = {s.id: s for s in self.segments}
        segments = [
            Segment(remap[old], by_id[old].category, by_id[old].is_thing, by_id[old].area)
            for old in order
        ]
        return PanopticMap(lut[self.segment_id], segments)

    def to_dict(self) -> dict:
        h, w = self.shape
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "panoptic",
            "height": h,
            "width": w,
            "segment_id": self.segment_id.ravel().tolist(),
            "segments": [asdict(s) for s in self.segments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> PanopticMap:
        if d.get("kind") != "panoptic":
            raise ValueError(f"not a panoptic map: kind={d.get('kind')!r}")
        grid = np.asarray(d["segment_id"], dtype=np.int32).reshape(d["height"], d["width"])
        segments = [Segment(int(s["id"]), int(s["category"]), bool(s["is_thing"]), int(s["area"]))
                    for s in d["segments"]]
        return cls(grid, segments)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> PanopticMap:
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, PanopticMap):
            return NotImplemented
        return np.array_equal(self.segment_id, other.segment_id) and self.segments == other.segments


@dataclass
class SemanticMap:
    category: np.ndarray

    def __post_init__(self):
        self.category = np.asarray(self.category, dtype=np.int32)
        if self.category.ndim != 2:
            raise ShapeError(f"category must be a 2-D grid, got shape {self.category.shape}")

    def to_dict(self) -> dict:
        h, w = self.category.shape
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "semantic",
            "height": h,
            "width": w,
            "category": self.category.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SemanticMap:
        if d.get("kind") != "semantic":
            raise ValueError(f"not a semantic map: kind={d.get('kind')!r}")
        return cls(np.asarray(d["category"], dtype=np.int32).reshape(d["height"], d["width"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SemanticMap:
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, SemanticMap):
            return NotImplemented
        return np.array_equal(self.category, other.category)


@dataclass(frozen=True)
class Instance:
    query: int
    category: int
    score: float
    mask: np.ndarray


def _prepare(masks, classes):
    masks = np.asarray(masks, dtype=np.float64)
    classes = np.asarray(classes, dtype=np.float64)
    if masks.ndim != 3:
        raise ShapeError(f"mask logits must be [Qn,H,W], got shape {masks.shape}")
    if classes.ndim != 2 or classes.shape[1] < 2:
        raise ShapeError(f"class logits must be [Qn,K+1] with K >= 1, got shape {classes.shape}")
    if masks.shape[0] != classes.shape[0]:
        raise ShapeError(f"query axis mismatch: masks {masks.shape[0]} vs classes {classes.shape[0]}")
    return elementwise("sigmoid", masks), elementwise("softmax", classes)


def semantic_scores(masks, classes) -> np.ndarray:
    """Per-category scores ``s[k, y, x] = sum_q p[q, k] * sigmoid(m[q, y, x])`` for ``k < K``."""
    mask_probs, probs = _prepare(masks, classes)
    return np.einsum("qk,qhw->khw", probs[:, :-1], mask_probs)


def semantic_decode(masks, classes) -> SemanticMap:
    return SemanticMap(np.argmax(semantic_scores(masks, classes), axis=0))


def _query_labels(probs: np.ndarray):
    k = probs.shape[1] - 1
    labels = np.argmax(probs[:, :k], axis=1)
    scores = probs[np.arange(len(probs)), labels]
    return labels, scores


def panoptic_decode(masks, classes, thresholds: Thresholds = Thresholds(),
                    is_thing=None) -> PanopticMap:
    """Merge per-query masks into a non-overlapping panoptic map.

    1. Keep query ``q`` if its overall argmax is not no-object and its best
       real-class probability reaches ``thresholds.cls``.
    2. Each pixel goes to the kept query maximizing ``score * sigmoid(mask)``,
       and stays void unless that query's sigmoid reaches ``thresholds.mask``.
    3. A query's segment is dropped (pixels become void) if its area is
       below ``min_area`` or below ``overlap`` times the area of its own
       binarized mask.
    4. Surviving stuff segments of one category are merged.

    ``is_thing[k]`` flags thing categories (default: every category is a
    thing, so nothing is merged). The result is canonically relabeled.
    """
    mask_probs, probs = _prepare(masks, classes)
    nq, h, w = mask_probs.shape
    k = probs.shape[1] - 1
    things = np.ones(k, dtype=bool) if is_thing is None else np.asarray(is_thing, dtype=bool)
    if things.shape != (k,):
        raise ShapeError(f"is_thing must have length K={k}, got {things.shape}")

    labels, scores = _query_labels(probs)
    keep = (np.argmax(probs, axis=1) != k) & (scores >= thresholds.cls)
    kept = np.flatnonzero(keep)
    grid = np.zeros((h, w), dtype=np.int32)
    if kept.size == 0:
        return PanopticMap(grid, [])

    weighted = scores[kept, None, None] * mask_probs[kept]
    winner = np.argmax(weighted, axis=0)
    win_prob = np.take_along_axis(mask_probs[kept], winner[None], axis=0)[0]
    assigned = win_prob >= thresholds.mask

    stuff_ids: dict[int, int] = {}
    categories: dict[int, int] = {}
    next_id = 1
    for j, q in enumerate(kept):
        region = assigned & (winner == j)
        area = int(region.sum())
        original = int((mask_probs[q] >= thresholds.mask).sum())
        if area == 0 or original == 0 or area < thresholds.min_area:
            continue
        if area / original < thresholds.overlap:
            continue
        cat = int(labels[q])
        if not things[cat] and cat in stuff_ids:
            grid[region] = stuff_ids[cat]
            continue
        grid[region] = next_id
        categories[next_id] = cat
        if not things[cat]:
            stuff_ids[cat] = next_id
        next_id += 1

    ids, counts = np.unique(grid, return_counts=True)
    segments = [Segment(int(i), categories[int(i)], bool(things[categories[int(i)]]), int(c))
                for i, c in zip(ids, counts) if i != 0]
    return PanopticMap(grid, segments).canonical()


def mask_quality(mask_probs: np.ndarray, threshold: float = 0.5) -> float:
    """Mean probability over the pixels that pass ``threshold`` (0 if none do)."""
    fg = mask_probs >= threshold
    n = int(fg.sum())
    return float(mask_probs[fg].sum() / n) if n else 0.0


def instance_decode(masks, classes, top_k: int, mask_threshold: float = 0.5) -> list[Instance]:
    """Top-``top_k`` queries ranked by ``class score * mask quality``."""
    if top_k < 1:
        raise ConfigError(f"top_k must be >= 1, got {top_k}")
    if not 0.0 <= mask_threshold <= 1.0:
        raise ConfigError(f"mask_threshold {mask_threshold} outside [0, 1]")
    mask_probs, probs = _prepare(masks, classes)
    labels, scores = _query_labels(probs)
    quality = np.array([mask_quality(mp, mask_threshold) for mp in mask_probs])
    ranking = scores * quality
    order = np.argsort(-ranking, kind="stable")[:top_k]
    return [
        Instance(int(q), int(labels[q]), float(ranking[q]), mask_probs[q] >= mask_threshold)
        for q in order
    ]
