"""Image-space and token-space mask heads.

Both heads take patch tokens ``t[B,N,C]`` and projected queries
``mq[B,Qn,C]`` and produce mask logits ``[B,Qn,H',W']``.

* :func:`image_space_head` rearranges tokens into a ``C``-channel feature
  map, optionally upsamples it, then scores every pixel against every
  query with one batched GEMM.
* :func:`token_space_head` scores queries against tokens directly
  (``mq @ t.T``), reshapes the ``Qn``-channel scores to the patch grid and
  optionally upsamples the logits.

Bilinear resampling and the dot product are both linear, so with no
upsampling the two heads agree exactly, and with upsampling they agree up
to rounding. They differ only in how large the intermediates are.

Stage names recorded on the counter (``reshape``, ``interpolate``,
``score``) are the same ones used by :mod:`tokenmask.cost`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .interp import ResamplePlan, bilinear_resize, resolve_output_stride
from .tensor import OpCounter, _count, _frozen, gemm, scores_to_grid, tokens_to_grid

UPSAMPLE_LOCATIONS = ("feature", "logit", "none")

STAGE_RESHAPE = "reshape"
STAGE_INTERPOLATE = "interpolate"
STAGE_SCORE = "score"


@dataclass(frozen=True)
class HeadConfig:
    """Where to upsample, and to what resolution.

    With ``upsample_location="none"`` the output stays on the patch grid and
    ``output_stride`` only has to be a valid divisor of the image.
    """

    upsample_location: str = "logit"
    output_stride: int = 4
    image_h: int = 640
    image_w: int = 640
    patch: int = 16

    def __post_init__(self):
        if self.upsample_location not in UPSAMPLE_LOCATIONS:
            raise ConfigError(
                f"upsample_location must be one of {UPSAMPLE_LOCATIONS}, got {self.upsample_location!r}"
            )
        resolve_output_stride(self.image_h, self.image_w, self.patch, self.output_stride)

    @property
    def grid(self) -> tuple[int, int]:
        return self.image_h // self.patch, self.image_w // self.patch

    @property
    def num_tokens(self) -> int:
        hp, wp = self.grid
        return hp * wp

    def plan(self) -> ResamplePlan:
        if self.upsample_location == "none":
            hp, wp = self.grid
            return ResamplePlan(hp, wp, hp, wp)
        return resolve_output_stride(self.image_h, self.image_w, self.patch, self.output_stride)

    @property
    def output_hw(self) -> tuple[int, int]:
        p = self.plan()
        return p.dst_h, p.dst_w

    @property
    def resamples(self) -> bool:
        return not self.plan().is_identity


@dataclass(frozen=True)
class QuerySet:
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeError(f"queries must be [B,Qn,C], got shape {self.values.shape}")
        if self.values.shape[1] < 1:
            raise ShapeError("a query set needs at least one query")

    @property
    def num_queries(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MaskProjection:
    """Linear map ``x -> weight @ x + bias`` applied to every query.

    ``hidden`` holds optional extra ``(weight, bias)`` layers applied first,
    each followed by a ReLU; the default is the plain single linear map.
    """

    weight: np.ndarray
    bias: np.ndarray | None = None
    hidden: tuple = field(default=())

    def __post_init__(self):
        c = self.weight.shape[0]
        if self.weight.ndim != 2 or self.weight.shape != (c, c):
            raise ShapeError(f"projection weight must be square, got shape {self.weight.shape}")
        if self.bias is not None and self.bias.shape != (c,):
            raise ShapeError(f"projection bias must have length {c}, got shape {self.bias.shape}")
        for w, b in self.hidden:
            if w.shape != (c, c) or (b is not None and b.shape != (c,)):
                raise ShapeError("hidden layers must be CxC with length-C bias")

    @property
    def channels(self) -> int:
        return self.weight.shape[0]

    @property
    def depth(self) -> int:
        return len(self.hidden) + 1

    @classmethod
    def random(cls, channels: int, rng: np.random.Generator, *, depth: int = 1,
               bias: bool = True, dtype=np.float32) -> MaskProjection:
        """Uniform weights in ``[-1/sqrt(C), 1/sqrt(C)]``."""
        bound = 1.0 / np.sqrt(channels)

        def layer():
            w = rng.uniform(-bound, bound, size=(channels, channels)).astype(dtype)
            b = rng.uniform(-bound, bound, size=channels).astype(dtype) if bias else None
            return w, b

        layers = [layer() for _ in range(depth)]
        w, b = layers[-1]
        return cls(w, b, tuple(layers[:-1]))


def project_queries(q, m: MaskProjection, counter: OpCounter | None = None) -> np.ndarray:
    """Mask embeddings ``out[b, i, :] = weight @ q[b, i, :] + bias``."""
    values = q.values if isinstance(q, QuerySet) else np.asarray(q)
    if values.ndim != 3:
        raise ShapeError(f"queries must be [B,Qn,C], got shape {values.shape}")
    nb, nq, c = values.shape
    if c != m.channels:
        raise ShapeError(f"query channels {c} != projection channels {m.channels}")
    x = values
    for w, b in (*m.hidden, (m.weight, m.bias)):
        y = x @ w.T.astype(x.dtype, copy=False)
        flops = 2 * nb * nq * c * c
        if b is not None:
            y = y + b.astype(x.dtype, copy=False)
            flops += nb * nq * c
        _count(counter, "project", flops, x.nbytes + w.nbytes, y.nbytes)
        if w is not m.weight:
            y = np.maximum(y, 0)
        x = y
    return _frozen(np.ascontiguousarray(x))


def _check_operands(t: np.ndarray, mq: np.ndarray) -> None:
    if t.ndim != 3:
        raise ShapeError(f"tokens must be [B,N,C], got shape {t.shape}")
    if mq.ndim != 3:
        raise ShapeError(f"mask embeddings must be [B,Qn,C], got shape {mq.shape}")
    if t.shape[0] != mq.shape[0]:
        raise ShapeError(f"batch mismatch: tokens {t.shape[0]} vs queries {mq.shape[0]}")
    if t.shape[2] != mq.shape[2]:
        raise ShapeError(f"channel mismatch: tokens C={t.shape[2]} vs queries C={mq.shape[2]}")
    if mq.shape[1] < 1:
        raise ShapeError("at least one query is required")


def _check_config(t: np.ndarray, cfg: HeadConfig, allowed: tuple[str, ...], head: str) -> None:
    if cfg.upsample_location not in allowed:
        raise ConfigError(f"{head} supports upsample_location in {allowed}, got {cfg.upsample_location!r}")
    if t.shape[1] != cfg.num_tokens:
        hp, wp = cfg.grid
        raise ShapeError(f"{head}: N={t.shape[1]} tokens but config implies a {hp}x{wp} grid")


def token_scores(t: np.ndarray, mq: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    """Query-token affinities ``L[b, q, i] = <mq[b, q], t[b, i]>`` as one GEMM."""
    _check_operands(t, mq)
    return gemm(mq, t, counter, transpose_b=True, name=STAGE_SCORE)


def image_space_head(t: np.ndarray, mq: np.ndarray, cfg: HeadConfig,
                     counter: OpCounter | None = None) -> np.ndarray:
    _check_operands(t, mq)
    _check_config(t, cfg, ("feature", "none"), "image_space_head")
    hp, wp = cfg.grid
    nb, _, c = t.shape
    feat = tokens_to_grid(t, hp, wp, counter, name=STAGE_RESHAPE)
    plan = cfg.plan()
    if cfg.upsample_location == "feature" and not plan.is_identity:
        feat = bilinear_resize(feat, plan.with_channels(c), counter, name=STAGE_INTERPOLATE)
    h, w = feat.shape[2:]
    masks = gemm(mq, feat.reshape(nb, c, h * w), counter, name=STAGE_SCORE)
    return masks.reshape(nb, mq.shape[1], h, w)


def token_space_head(t: np.ndarray, mq: np.ndarray, cfg: HeadConfig,
                     counter: OpCounter | None = None) -> np.ndarray:
    _check_operands(t, mq)
    _check_config(t, cfg, ("logit", "none"), "token_space_head")
    hp, wp = cfg.grid
    scores = token_scores(t, mq, counter)
    masks = scores_to_grid(scores, hp, wp, counter, name=STAGE_RESHAPE)
    plan = cfg.plan()
    if cfg.upsample_location == "logit" and not plan.is_identity:
        masks = bilinear_resize(masks, plan.with_channels(mq.shape[1]), counter,
                                name=STAGE_INTERPOLATE)
    return masks


def head_for(location: str):
    """The head that implements an upsampling location (``none`` -> token head)."""
    if location == "feature":
        return image_space_head
    if location in ("logit", "none"):
        return token_space_head
    raise ConfigError(f"unknown upsample location {location!r}")
