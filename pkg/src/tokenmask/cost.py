"""Closed-form FLOPs, bytes and peak-activation model for both mask heads.

The model mirrors the pipelines in :mod:`tokenmask.heads` stage by stage
and uses the same counting convention as :class:`tokenmask.tensor.OpCounter`
(multiply = 1, add = 1, bilinear sample = 7), so it can be checked against
instrumented runs with zero tolerance via :func:`validate_against_counters`.

Image head (``feature`` / ``none``)::

    reshape      0                      writes B*C*N
    interpolate  7*B*C*H'*W'            writes B*C*H'*W'     (feature, if resampling)
    score        2*B*Qn*C*P             writes B*Qn*P        (P = H'*W' or N)

Token head (``logit`` / ``none``)::

    score        2*B*Qn*N*C             writes B*Qn*N
    reshape      0                      writes B*Qn*N
    interpolate  7*B*Qn*H'*W'           writes B*Qn*H'*W'    (logit, if resampling)

Peak activation is the largest single tensor any stage writes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, CounterMismatch
from .heads import (
    STAGE_INTERPOLATE,
    STAGE_RESHAPE,
    STAGE_SCORE,
    HeadConfig,
    image_space_head,
    project_queries,
    token_space_head,
)
from .interp import BILINEAR_FLOPS_PER_SAMPLE
from .synthetic import gen_synthetic
from .tensor import OpCounter


@dataclass(frozen=True)
class BackbonePreset:
    name: str
    C: int
    depth: int
    heads: int
    patch: int = 16

    def __post_init__(self):
        if self.C % self.heads:
            raise ConfigError(f"{self.name}: embed dim {self.C} not divisible by {self.heads} heads")

    @property
    def default_query_blocks(self) -> int:
        return math.ceil(self.depth / 4)


PRESETS = {
    p.name: p
    for p in (
        BackbonePreset("vit-tiny", 192, 12, 3),
        BackbonePreset("vit-small", 384, 12, 6),
        BackbonePreset("vit-base", 768, 12, 12),
        BackbonePreset("vit-large", 1024, 24, 16),
    )
}


def get_preset(name: str) -> BackbonePreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class StageCost:
    name: str
    flops: int
    bytes_read: int
    bytes_written: int

    @property
    def peak_activation_bytes(self) -> int:
        return self.bytes_written


@dataclass
class CostReport:
    head: str
    stages: list[StageCost]
    config: dict = field(default_factory=dict)

    @property
    def flops(self) -> int:
        return sum(s.flops for s in self.stages)

    @property
    def bytes_read(self) -> int:
        return sum(s.bytes_read for s in self.stages)

    @property
    def bytes_written(self) -> int:
        return sum(s.bytes_written for s in self.stages)

    @property
    def peak_activation_bytes(self) -> int:
        return max((s.peak_activation_bytes for s in self.stages), default=0)

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    def stage(self, name: str) -> StageCost | None:
        return next((s for s in self.stages if s.name == name), None)

    def to_dict(self) -> dict:
        return {
            "head": self.head,
            "config": dict(self.config),
            "stages": [dict(asdict(s), peak_activation_bytes=s.peak_activation_bytes)
                       for s in self.stages],
            "totals": {
                "flops": self.flops,
                "bytes_read": self.bytes_read,
                "bytes_written": self.bytes_written,
                "peak_activation_bytes": self.peak_activation_bytes,
            },
        }


def default_head(location: str) -> str:
    return "image" if location == "feature" else "token"


def head_cost(cfg: HeadConfig, preset: BackbonePreset, Qn: int, *, batch: int = 1,
              head: str | None = None, bytes_per_scalar: int = 4) -> CostReport:
    """Analytical per-stage cost of one head configuration.

    ``head`` selects ``"image"`` or ``"token"``; by default ``feature`` maps
    to the image head and ``logit``/``none`` to the token head.
    """
    head = head or default_head(cfg.upsample_location)
    if head not in ("image", "token"):
        raise ConfigError(f"head must be 'image' or 'token', got {head!r}")
    allowed = ("feature", "none") if head == "image" else ("logit", "none")
    if cfg.upsample_location not in allowed:
        raise ConfigError(f"{head} head does not support upsample_location={cfg.upsample_location!r}")
    if cfg.patch != preset.patch:
        raise ConfigError(f"config patch {cfg.patch} != preset patch {preset.patch}")
    if Qn < 1 or batch < 1:
        raise ConfigError("Qn and batch must be >= 1")

    B, C, N, s = batch, preset.C, cfg.num_tokens, bytes_per_scalar
    out_h, out_w = cfg.output_hw
    P = out_h * out_w
    upsample = cfg.resamples and cfg.upsample_location != "none"

    if head == "image":
        stages = [StageCost(STAGE_RESHAPE, 0, s * B * N * C, s * B * C * N)]
        if upsample:
            stages.append(StageCost(STAGE_INTERPOLATE, BILINEAR_FLOPS_PER_SAMPLE * B * C * P,
                                    s * B * C * N, s * B * C * P))
        stages.append(StageCost(STAGE_SCORE, 2 * B * Qn * C * P,
                                s * (B * Qn * C + B * C * P), s * B * Qn * P))
    else:
        stages = [
            StageCost(STAGE_SCORE, 2 * B * Qn * N * C, s * (B * Qn * C + B * N * C), s * B * Qn * N),
            StageCost(STAGE_RESHAPE, 0, s * B * Qn * N, s * B * Qn * N),
        ]
        if upsample:
            stages.append(StageCost(STAGE_INTERPOLATE, BILINEAR_FLOPS_PER_SAMPLE * B * Qn * P,
                                    s * B * Qn * N, s * B * Qn * P))

    config = {
        "preset": preset.name,
        "image": [cfg.image_h, cfg.image_w],
        "patch": cfg.patch,
        "Qn": Qn,
        "batch": batch,
        "upsample_location": cfg.upsample_location,
        "output_stride": cfg.output_stride,
        "output": [out_h, out_w],
        "bytes_per_scalar": bytes_per_scalar,
    }
    return CostReport(head, stages, config)


def backbone_cost(preset: BackbonePreset, image_h: int, image_w: int, Qn: int = 0,
                  query_blocks: int | None = None) -> int:
    """Modeled ViT forward FLOPs with queries joining the last blocks.

    Per block with sequence length S:
    ``2 * (4*S*C^2 + 2*S^2*C + 8*S*C^2)`` (QKV+output projections,
    attention scores and mixing, 4x MLP). Patch embedding adds
    ``2*N*C*3*patch^2``.
    """
    p, C = preset.patch, preset.C
    if image_h % p or image_w % p:
        raise ConfigError(f"image {image_h}x{image_w} not divisible by patch {p}")
    if query_blocks is None:
        query_blocks = preset.default_query_blocks
    if not 0 <= query_blocks <= preset.depth:
        raise ConfigError(f"query_blocks must be in [0, {preset.depth}], got {query_blocks}")
    if Qn < 0:
        raise ConfigError("Qn must be >= 0")
    N = (image_h // p) * (image_w // p)

    def block(S):
        return 2 * (4 * S * C * C + 2 * S * S * C + 8 * S * C * C)

    n_query = query_blocks if Qn > 0 else 0
    total = (preset.depth - n_query) * block(N) + n_query * block(N + Qn)
    return total + 2 * N * C * (3 * p * p)


def peak_memory(cfg: HeadConfig, preset: BackbonePreset, Qn: int, bytes_per_scalar: int = 4, *,
                batch: int = 1, head: str | None = None) -> int:
    """Largest single activation (bytes) materialized by the head."""
    return head_cost(cfg, preset, Qn, batch=batch, head=head,
                     bytes_per_scalar=bytes_per_scalar).peak_activation_bytes


@dataclass
class ValidationReport:
    head: str
    analytical: CostReport
    measured: dict[str, dict[str, int]]
    mismatches: list[str]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def validate_against_counters(cfg: HeadConfig, preset: BackbonePreset, Qn: int, seed: int = 0, *,
                              batch: int = 1, head: str | None = None,
                              dtype=np.float32, raise_on_mismatch: bool = True) -> ValidationReport:
    """Run a head with instrumentation and compare with :func:`head_cost`.

    Every stage's FLOPs, bytes read and bytes written, and the peak
    activation, must match exactly.
    """
    if cfg.num_tokens > 4096:
        raise ConfigError(f"validation is limited to N <= 4096 tokens, got {cfg.num_tokens}")
    head = head or default_head(cfg.upsample_location)
    itemsize = np.dtype(dtype).itemsize
    analytical = head_cost(cfg, preset, Qn, batch=batch, head=head, bytes_per_scalar=itemsize)

    inputs = gen_synthetic(seed, batch, cfg.num_tokens, preset.C, Qn, 1, dtype=dtype)
    mq = project_queries(inputs.queries, inputs.projection)
    counter = OpCounter()
    run = image_space_head if head == "image" else token_space_head
    run(inputs.tokens, mq, cfg, counter)

    measured = {
        name: {"flops": r.flops, "bytes_read": r.bytes_read, "bytes_written": r.bytes_written}
        for name, r in counter.by_stage().items()
    }
    mismatches = []
    expected_names = [s.name for s in analytical.stages]
    if list(measured) != expected_names:
        mismatches.append(f"stage list: analytical {expected_names} vs measured {list(measured)}")
    for s in analytical.stages:
        got = measured.get(s.name)
        if got is None:
            continue
        for key in ("flops", "bytes_read", "bytes_written"):
            if got[key] != getattr(s, key):
                mismatches.append(f"{s.name}.{key}: analytical {getattr(s, key)} vs measured {got[key]}")
    if counter.peak_alloc_bytes != analytical.peak_activation_bytes:
        mismatches.append(
            f"peak: analytical {analytical.peak_activation_bytes} vs measured {counter.peak_alloc_bytes}"
        )

    report = ValidationReport(head, analytical, measured, mismatches)
    if mismatches and raise_on_mismatch:
        raise CounterMismatch(f"{preset.name}/{head}/{cfg.upsample_location}: " + "; ".join(mismatches))
    return report
