"""Bilinear resampling over an arbitrary channel axis.

The same kernel serves feature-space upsampling (``C`` channels) and
logit-space upsampling (``Q`` channels). Sample positions use half-pixel
centers, ``src = (i + 0.5) * src_size / dst_size - 0.5``, clamped to the
valid range. No anti-aliasing is applied when downsampling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import OpCounter, _count, _frozen

# Cost-model constant: 4 multiplies + 3 adds per output sample.
BILINEAR_FLOPS_PER_SAMPLE = 7
OUTPUT_STRIDES = (1, 4, 8, 16)


@dataclass(frozen=True)
class ResamplePlan:
    src_h: int
    src_w: int
    dst_h: int
    dst_w: int
    channel_count: int | None = None
    corner_mode: str = "half-pixel"

    def __post_init__(self):
        for name in ("src_h", "src_w", "dst_h", "dst_w"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.channel_count is not None and self.channel_count < 1:
            raise ConfigError(f"channel_count must be >= 1, got {self.channel_count}")
        if self.corner_mode != "half-pixel":
            raise ConfigError(f"only half-pixel corner mode is supported, got {self.corner_mode!r}")

    @property
    def is_identity(self) -> bool:
        return (self.src_h, self.src_w) == (self.dst_h, self.dst_w)

    @property
    def scale(self) -> tuple[float, float]:
        return self.dst_h / self.src_h, self.dst_w / self.src_w

    def with_channels(self, channel_count: int) -> ResamplePlan:
        return replace(self, channel_count=channel_count)


def resolve_output_stride(image_h: int, image_w: int, patch: int, stride: int) -> ResamplePlan:
    """Plan resampling from the patch grid to ``image / stride``.

    >>> resolve_output_stride(640, 640, 16, 4)
    ResamplePlan(src_h=40, src_w=40, dst_h=160, dst_w=160, channel_count=None, corner_mode='half-pixel')
    """
    if min(image_h, image_w, patch, stride) < 1:
        raise ConfigError("image extents, patch and stride must be positive")
    if image_h % patch or image_w % patch:
        raise ConfigError(f"image {image_h}x{image_w} not divisible by patch {patch}")
    if image_h % stride or image_w % stride:
        raise ConfigError(f"image {image_h}x{image_w} not divisible by output stride {stride}")
    return ResamplePlan(image_h // patch, image_w // patch, image_h // stride, image_w // stride)


def source_coords(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Neighbor indices and the weight of the upper neighbor along one axis."""
    coord = (np.arange(dst, dtype=np.float64) + 0.5) * src / dst - 0.5
    coord = np.clip(coord, 0.0, src - 1)
    lo = np.floor(coord).astype(np.intp)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, coord - lo


def interpolation_matrix(src: int, dst: int, dtype=np.float64) -> np.ndarray:
    """``[dst, src]`` matrix whose row ``i`` holds the two weights of sample ``i``."""
    lo, hi, w_hi = source_coords(src, dst)
    mat = np.zeros((dst, src), dtype=np.float64)
    rows = np.arange(dst)
    np.add.at(mat, (rows, lo), 1.0 - w_hi)
    np.add.at(mat, (rows, hi), w_hi)
    return mat.astype(dtype)


def bilinear_resize(x: np.ndarray, plan: ResamplePlan, counter: OpCounter | None = None, *,
                    name: str = "bilinear_resize") -> np.ndarray:
    """Resize ``x[B,Ch,H,W]`` to ``[B,Ch,dst_h,dst_w]``.

    Evaluated separably as ``rows @ x @ cols.T`` with sparse-by-construction
    interpolation matrices (at most two nonzeros per row), which is
    algebraically the four-neighbor weighted sum. The counter is charged the model constant
    ``BILINEAR_FLOPS_PER_SAMPLE`` per output sample regardless of the
    evaluation order.
    """
    if x.ndim != 4:
        raise ShapeError(f"bilinear_resize: expected rank 4 [B,Ch,H,W], got shape {x.shape}")
    nb, ch, h, w = x.shape
    if (h, w) != (plan.src_h, plan.src_w):
        raise ShapeError(
            f"bilinear_resize: input spatial extent {h}x{w} != plan source {plan.src_h}x{plan.src_w}"
        )
    if plan.channel_count is not None and plan.channel_count != ch:
        raise ShapeError(f"bilinear_resize: input has {ch} channels, plan expects {plan.channel_count}")

    if plan.is_identity:
        out = x.copy()
    else:
        rows = interpolation_matrix(h, plan.dst_h, x.dtype)
        cols = interpolation_matrix(w, plan.dst_w, x.dtype)
        out = np.ascontiguousarray(np.matmul(np.matmul(rows, x), cols.T))

    _count(counter, name, BILINEAR_FLOPS_PER_SAMPLE * nb * ch * plan.dst_h * plan.dst_w,
           x.nbytes, out.nbytes)
    return _frozen(out)
