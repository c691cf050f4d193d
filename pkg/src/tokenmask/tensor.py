"""Dense row-major array substrate with per-operation cost accounting.

Arrays are plain C-contiguous numpy arrays (float32 by default, float64
for reference checks). Every operation here returns a fresh read-only
array and, when handed an :class:`OpCounter`, records the scalar FLOPs and
bytes it moved.

FLOP convention: one multiply counts 1, one add counts 1, so a
multiply-accumulate is 2. No broadcasting is performed anywhere; operand
extents must agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

DEFAULT_DTYPE = np.float32
SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
MAX_RANK = 4

# Per-element FLOP constants for `elementwise`.
#   sigmoid: negate, exp, add 1, divide
#   softmax: subtract row max, exp, accumulate, divide
ELEMENTWISE_FLOPS = {
    "sigmoid": 4,
    "softmax": 4,
    "scale": 1,
    "add": 1,
}


@dataclass(frozen=True)
class OpRecord:
    name: str
    flops: int
    bytes_read: int
    bytes_written: int


@dataclass
class OpCounter:
    """Accumulates FLOPs and bytes over a sequence of operations.

    ``peak_alloc_bytes`` tracks the largest single tensor written by any
    recorded operation; every op here materializes exactly one output, so
    this is the largest transient allocation seen.
    """

    flops: int = 0
    bytes_read: int = 0
    bytes_written: int = 0
    peak_alloc_bytes: int = 0
    records: list[OpRecord] = field(default_factory=list)

    def record(self, name: str, flops: int = 0, bytes_read: int = 0,
               bytes_written: int = 0) -> None:
        if flops < 0 or bytes_read < 0 or bytes_written < 0:
            raise ValueError("counts must be non-negative")
        self.flops += int(flops)
        self.bytes_read += int(bytes_read)
        self.bytes_written += int(bytes_written)
        self.peak_alloc_bytes = max(self.peak_alloc_bytes, int(bytes_written))
        self.records.append(OpRecord(name, int(flops), int(bytes_read), int(bytes_written)))

    def merge(self, other: OpCounter) -> OpCounter:
        """Return a new counter holding both histories (counts add)."""
        out = OpCounter()
        for rec in (*self.records, *other.records):
            out.record(rec.name, rec.flops, rec.bytes_read, rec.bytes_written)
        return out

    def by_stage(self) -> dict[str, OpRecord]:
        """Aggregate records sharing a name, keeping first-seen order."""
        stages: dict[str, OpRecord] = {}
        for rec in self.records:
            prev = stages.get(rec.name)
            if prev is None:
                stages[rec.name] = rec
            else:
                stages[rec.name] = OpRecord(
                    rec.name,
                    prev.flops + rec.flops,
                    prev.bytes_read + rec.bytes_read,
                    prev.bytes_written + rec.bytes_written,
                )
        return stages


def _count(counter, name, flops, bytes_read, bytes_written):
    if counter is not None:
        counter.record(name, flops, bytes_read, bytes_written)


def _frozen(x: np.ndarray) -> np.ndarray:
    x.flags.writeable = False
    return x


def as_tensor(x, dtype=None) -> np.ndarray:
    """Validate and freeze ``x`` as a dense tensor.

    Non-float input is converted to ``DEFAULT_DTYPE``; float32/float64 input
    keeps its precision unless ``dtype`` is given. The result is always a
    fresh C-contiguous read-only copy.
    """
    arr = np.asarray(x)
    if dtype is None:
        dtype = arr.dtype if arr.dtype in SUPPORTED_DTYPES else DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in SUPPORTED_DTYPES:
        raise TypeError(f"unsupported dtype {dtype}; expected float32 or float64")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ShapeError(f"tensor rank must be 1..{MAX_RANK}, got shape {arr.shape}")
    out = np.array(arr, dtype=dtype, order="C", copy=True)
    if not np.all(np.isfinite(out)):
        raise ValueError("tensor contains NaN or Inf")
    return _frozen(out)


def _require_rank(x: np.ndarray, rank: int, what: str) -> None:
    if x.ndim != rank:
        raise ShapeError(f"{what}: expected rank {rank}, got shape {x.shape}")


def _require_same_dtype(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.dtype != b.dtype:
        raise TypeError(f"{what}: dtype mismatch {a.dtype} vs {b.dtype}")


def gemm(a: np.ndarray, b: np.ndarray, counter: OpCounter | None = None, *,
         transpose_b: bool = False, ordered: bool | None = None,
         name: str = "gemm") -> np.ndarray:
    """Batched matrix product ``a[B,P,R] @ b[B,R,S] -> [B,P,S]``.

    With ``transpose_b`` the second operand is given as ``[B,S,R]`` and
    used transposed, which avoids materializing the transpose.
    Records exactly ``2*B*P*R*S`` FLOPs.

    ``ordered`` accumulates the inner axis strictly in index order, so the
    result is bit-identical however the operands are laid out in memory
    (BLAS picks differently blocked kernels for transposed operands). It
    defaults to on for float64, the reference precision, and off for
    float32, which goes through BLAS.
    """
    _require_rank(a, 3, "gemm a")
    _require_rank(b, 3, "gemm b")
    _require_same_dtype(a, b, "gemm")
    bt = b.swapaxes(1, 2) if transpose_b else b
    if a.shape[0] != bt.shape[0]:
        raise ShapeError(
            f"gemm: batch axis mismatch, a.shape[0]={a.shape[0]} vs b.shape[0]={b.shape[0]}"
        )
    if a.shape[2] != bt.shape[1]:
        b_axis = 2 if transpose_b else 1
        raise ShapeError(
            f"gemm: inner axis mismatch, a.shape[2]={a.shape[2]} vs "
            f"b.shape[{b_axis}]={b.shape[b_axis]}"
        )
    nb, p, r = a.shape
    s = bt.shape[2]
    if ordered is None:
        ordered = a.dtype == np.float64
    if ordered:
        out = np.zeros((nb, p, s), dtype=a.dtype)
        for k in range(r):
            out += a[:, :, k, None] * bt[:, None, k, :]
    else:
        out = np.ascontiguousarray(np.matmul(a, bt))
    _count(counter, name, 2 * nb * p * r * s, a.nbytes + b.nbytes, out.nbytes)
    return _frozen(out)


def _check_grid(n: int, hp: int, wp: int, what: str) -> None:
    if hp < 1 or wp < 1 or n != hp * wp:
        raise ShapeError(f"{what}: token count {n} != hp*wp = {hp}*{wp}")


def tokens_to_grid(t: np.ndarray, hp: int, wp: int, counter: OpCounter | None = None, *,
                   name: str = "tokens_to_grid") -> np.ndarray:
    """Rearrange tokens ``[B,N,C]`` into a feature map ``[B,C,hp,wp]``.

    ``out[b, c, y, x] == t[b, y*wp + x, c]``.
    """
    _require_rank(t, 3, "tokens_to_grid")
    nb, n, c = t.shape
    _check_grid(n, hp, wp, "tokens_to_grid")
    out = np.ascontiguousarray(t.reshape(nb, hp, wp, c).transpose(0, 3, 1, 2))
    _count(counter, name, 0, t.nbytes, out.nbytes)
    return _frozen(out)


def grid_to_tokens(f: np.ndarray, counter: OpCounter | None = None, *,
                   name: str = "grid_to_tokens") -> np.ndarray:
    """Inverse of :func:`tokens_to_grid`."""
    _require_rank(f, 4, "grid_to_tokens")
    nb, c, hp, wp = f.shape
    out = np.ascontiguousarray(f.reshape(nb, c, hp * wp).transpose(0, 2, 1))
    _count(counter, name, 0, f.nbytes, out.nbytes)
    return _frozen(out)


def scores_to_grid(l: np.ndarray, hp: int, wp: int, counter: OpCounter | None = None, *,
                   name: str = "scores_to_grid") -> np.ndarray:
    """Reshape token scores ``[B,Q,N]`` to the patch grid ``[B,Q,hp,wp]``."""
    _require_rank(l, 3, "scores_to_grid")
    nb, q, n = l.shape
    _check_grid(n, hp, wp, "scores_to_grid")
    out = l.reshape(nb, q, hp, wp).copy()
    _count(counter, name, 0, l.nbytes, out.nbytes)
    return _frozen(out)


def grid_to_scores(m: np.ndarray, counter: OpCounter | None = None, *,
                   name: str = "grid_to_scores") -> np.ndarray:
    """Inverse of :func:`scores_to_grid`."""
    _require_rank(m, 4, "grid_to_scores")
    nb, q, hp, wp = m.shape
    out = m.reshape(nb, q, hp * wp).copy()
    _count(counter, name, 0, m.nbytes, out.nbytes)
    return _frozen(out)


def elementwise(kind: str, x: np.ndarray, counter: OpCounter | None = None, *,
                other: np.ndarray | None = None, alpha: float = 1.0) -> np.ndarray:
    """Apply ``sigmoid``, ``softmax`` (last axis), ``scale`` or ``add``.

    ``scale`` multiplies by ``alpha``; ``add`` needs ``other`` with exactly
    the same shape. FLOPs are ``ELEMENTWISE_FLOPS[kind] * x.size``.
    """
    if kind not in ELEMENTWISE_FLOPS:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    x = np.asarray(x)
    read = x.nbytes
    if kind == "sigmoid":
        out = _sigmoid(x)
    elif kind == "softmax":
        if x.ndim == 0 or x.shape[-1] < 1:
            raise ShapeError(f"softmax: last axis must have extent >= 1, got shape {x.shape}")
        out = _softmax(x)
    elif kind == "scale":
        out = x * x.dtype.type(alpha)
    else:
        if other is None:
            raise ValueError("add requires `other`")
        other = np.asarray(other)
        if other.shape != x.shape:
            raise ShapeError(f"add: shape mismatch {x.shape} vs {other.shape} (no broadcasting)")
        _require_same_dtype(x, other, "add")
        read += other.nbytes
        out = x + other
    out = np.ascontiguousarray(out)
    _count(counter, kind, ELEMENTWISE_FLOPS[kind] * x.size, read, out.nbytes)
    return _frozen(out)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return elementwise("sigmoid", x)


def softmax(x: np.ndarray) -> np.ndarray:
    return elementwise("softmax", x)
