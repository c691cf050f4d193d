"""Seeded synthetic inputs for tests, validation and benchmarks.

Uses numpy's PCG64 generator (``np.random.default_rng(seed)``). Outputs are
reproducible for a given seed and numpy version.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .heads import MaskProjection, QuerySet
from .tensor import as_tensor


@dataclass(frozen=True)
class SyntheticInputs:
    tokens: np.ndarray          # [B, N, C], values in [-1, 1]
    queries: QuerySet           # [B, Qn, C], values in [-1, 1]
    projection: MaskProjection
    class_logits: np.ndarray    # [B, Qn, K+1], last slot = no-object


def gen_synthetic(seed: int, B: int, N: int, C: int, Qn: int, K: int, *,
                  dtype=np.float32, depth: int = 1) -> SyntheticInputs:
    if min(B, N, C, Qn, K) < 1:
        raise ValueError(f"extents must be positive, got B={B} N={N} C={C} Qn={Qn} K={K}")
    rng = np.random.default_rng(seed)
    tokens = as_tensor(rng.uniform(-1.0, 1.0, size=(B, N, C)), dtype)
    queries = QuerySet(as_tensor(rng.uniform(-1.0, 1.0, size=(B, Qn, C)), dtype))
    projection = MaskProjection.random(C, rng, depth=depth, dtype=dtype)
    class_logits = as_tensor(rng.normal(0.0, 2.0, size=(B, Qn, K + 1)), dtype)
    return SyntheticInputs(tokens, queries, projection, class_logits)


def checksum(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()
