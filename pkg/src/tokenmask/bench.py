"""Timed head execution, ablation sweeps and report emission.

Each :func:`run_bench` call builds one seeded input set, runs the image-space
and the token-space head on it, and records

* wall time per head (``time.perf_counter``; warmup runs are discarded),
* the analytical :class:`~tokenmask.cost.CostReport` of each head,
* the largest absolute difference between the two heads' mask logits,
* modeled backbone GFLOPs, for context only (the backbone is never run).

``feature`` and ``logit`` rows compare image-space feature upsampling with
token-space logit upsampling; ``none`` rows compare both heads at the patch
grid. Only the heads are timed, not query projection or decoding.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .cost import CostReport, backbone_cost, get_preset, head_cost
from .errors import ConfigError
from .heads import UPSAMPLE_LOCATIONS, HeadConfig, image_space_head, project_queries, token_space_head
from .synthetic import gen_synthetic

SCHEMA_VERSION = 1
PRECISIONS = {"float32": np.float32, "float64": np.float64}

CSV_FIELDS = [
    "schema_version",
    "preset",
    "resolution",
    "Qn",
    "upsample_location",
    "stride",
    "head",
    "median_ms",
    "min_ms",
    "iqr_ms",
    "repetitions",
    "throughput",
    "head_gflops",
    "peak_bytes",
    "max_deviation",
    "image_median_ms",
    "token_median_ms",
    "image_head_gflops",
    "token_head_gflops",
    "backbone_gflops_modeled",
]
TIMING_FIELDS = frozenset(
    {"median_ms", "min_ms", "iqr_ms", "throughput", "image_median_ms", "token_median_ms"}
)


@dataclass(frozen=True)
class BenchConfig:
    preset: str = "vit-small"
    image_h: int = 640
    image_w: int = 640
    Qn: int = 200
    upsample_location: str = "logit"
    output_stride: int = 4
    batch: int = 1
    repetitions: int = 5
    warmup: int = 1
    seed: int = 0
    precision: str = "float32"
    threads: int = 1

    def __post_init__(self):
        preset = get_preset(self.preset)
        if self.repetitions < 3:
            raise ConfigError(f"repetitions must be >= 3, got {self.repetitions}")
        if self.warmup < 0 or self.batch < 1 or self.Qn < 1 or self.threads < 1:
            raise ConfigError("warmup must be >= 0; batch, Qn and threads must be >= 1")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {sorted(PRECISIONS)}, got {self.precision!r}")
        if self.upsample_location not in UPSAMPLE_LOCATIONS:
            raise ConfigError(f"upsample_location must be one of {UPSAMPLE_LOCATIONS}")
        HeadConfig(self.upsample_location, self.output_stride, self.image_h, self.image_w, preset.patch)

    @property
    def head_locations(self) -> dict[str, str]:
        if self.upsample_location == "none":
            return {"image": "none", "token": "none"}
        return {"image": "feature", "token": "logit"}

    @property
    def primary_head(self) -> str:
        return "image" if self.upsample_location == "feature" else "token"

    def head_config(self, head: str) -> HeadConfig:
        return HeadConfig(self.head_locations[head], self.output_stride, self.image_h, self.image_w,
                          get_preset(self.preset).patch)


@dataclass(frozen=True)
class TimingStats:
    samples_s: tuple[float, ...]

    @property
    def median_ms(self) -> float:
        return float(np.median(self.samples_s) * 1e3)

    @property
    def min_ms(self) -> float:
        return float(np.min(self.samples_s) * 1e3)

    @property
    def max_ms(self) -> float:
        return float(np.max(self.samples_s) * 1e3)

    @property
    def iqr_ms(self) -> float:
        q75, q25 = np.percentile(self.samples_s, [75, 25])
        return float((q75 - q25) * 1e3)

    @property
    def throughput(self) -> float:
        """Head executions per second at the median time."""
        return 1e3 / self.median_ms if self.median_ms > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "median_ms": self.median_ms,
            "min_ms": self.min_ms,
            "max_ms": self.max_ms,
            "iqr_ms": self.iqr_ms,
            "repetitions": len(self.samples_s),
            "throughput": self.throughput,
        }


@dataclass
class BenchResult:
    config: BenchConfig
    timings: dict[str, TimingStats]
    costs: dict[str, CostReport]
    max_deviation: float
    backbone_flops: int
    outputs: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_row(self) -> dict:
        cfg = self.config
        primary = cfg.primary_head
        t = self.timings[primary]
        return {
            "schema_version": SCHEMA_VERSION,
            "preset": cfg.preset,
            "resolution": f"{cfg.image_h}x{cfg.image_w}",
            "Qn": cfg.Qn,
            "upsample_location": cfg.upsample_location,
            "stride": cfg.output_stride,
            "head": primary,
            "median_ms": t.median_ms,
            "min_ms": t.min_ms,
            "iqr_ms": t.iqr_ms,
            "repetitions": len(t.samples_s),
            "throughput": t.throughput,
            "head_gflops": self.costs[primary].gflops,
            "peak_bytes": self.costs[primary].peak_activation_bytes,
            "max_deviation": self.max_deviation,
            "image_median_ms": self.timings["image"].median_ms,
            "token_median_ms": self.timings["token"].median_ms,
            "image_head_gflops": self.costs["image"].gflops,
            "token_head_gflops": self.costs["token"].gflops,
            "backbone_gflops_modeled": self.backbone_flops / 1e9,
        }

    def to_dict(self) -> dict:
        row = self.to_row()
        row["config"] = asdict(self.config)
        row["timing"] = {head: t.to_dict() for head, t in self.timings.items()}
        row["costs"] = {head: c.to_dict() for head, c in self.costs.items()}
        row["backbone"] = {"flops": self.backbone_flops, "modeled": True}
        return row


def _time_pair(fns: dict, warmup: int, reps: int):
    """Time several callables with their repetitions interleaved.

    Alternating runs spreads any drift in machine load evenly across the
    callables instead of penalizing whichever one runs second.
    """
    outs = {}
    for _ in range(warmup):
        for name, fn in fns.items():
            outs[name] = fn()
    samples = {name: [] for name in fns}
    for _ in range(reps):
        for name, fn in fns.items():
            start = time.perf_counter()
            outs[name] = fn()
            samples[name].append(time.perf_counter() - start)
    return {name: TimingStats(tuple(v)) for name, v in samples.items()}, outs


def run_bench(cfg: BenchConfig, keep_outputs: bool = False) -> BenchResult:
    preset = get_preset(cfg.preset)
    dtype = PRECISIONS[cfg.precision]
    img_cfg, tok_cfg = cfg.head_config("image"), cfg.head_config("token")
    inputs = gen_synthetic(cfg.seed, cfg.batch, img_cfg.num_tokens, preset.C, cfg.Qn, 1, dtype=dtype)
    mq = project_queries(inputs.queries, inputs.projection)
    t = inputs.tokens

    with threadpool_limits(limits=cfg.threads):
        timings, outs = _time_pair({
            "image": lambda: image_space_head(t, mq, img_cfg),
            "token": lambda: token_space_head(t, mq, tok_cfg),
        }, cfg.warmup, cfg.repetitions)
    img_out, tok_out = outs["image"], outs["token"]

    deviation = float(np.max(np.abs(img_out - tok_out)))
    itemsize = np.dtype(dtype).itemsize
    costs = {
        "image": head_cost(img_cfg, preset, cfg.Qn, batch=cfg.batch, head="image", bytes_per_scalar=itemsize),
        "token": head_cost(tok_cfg, preset, cfg.Qn, batch=cfg.batch, head="token", bytes_per_scalar=itemsize),
    }
    result = BenchResult(
        cfg,
        timings,
        costs,
        deviation,
        cfg.batch * backbone_cost(preset, cfg.image_h, cfg.image_w, cfg.Qn),
    )
    if keep_outputs:
        result.outputs = {"image": img_out, "token": tok_out}
    return result


def sweep_upsampling(presets=("vit-tiny", "vit-small", "vit-base", "vit-large"), *,
                     image: int = 640, Qn: int = 200, stride: int = 4, **kw) -> list[BenchResult]:
    """Rows analogous to the upsampling ablation: presets x {feature, logit, none}."""
    return [
        run_bench(BenchConfig(preset=p, image_h=image, image_w=image, Qn=Qn,
                              upsample_location=loc, output_stride=stride, **kw))
        for p in presets
        for loc in UPSAMPLE_LOCATIONS
    ]


def sweep_stride(preset: str = "vit-small", strides=(1, 4, 8, 16), *, image: int = 640,
                 Qn: int = 200, location: str = "logit", **kw) -> list[BenchResult]:
    """Rows analogous to the output-stride study, one per stride."""
    return [
        run_bench(BenchConfig(preset=preset, image_h=image, image_w=image, Qn=Qn,
                              upsample_location=location, output_stride=s, **kw))
        for s in strides
    ]


def emit_report(results: list[BenchResult], fmt: str, path) -> Path:
    """Write results as ``csv`` (one flat row each) or ``json`` (rows plus nested detail)."""
    if not results:
        raise ValueError("no results to report")
    if fmt not in ("json", "csv"):
        raise ConfigError(f"format must be 'json' or 'csv', got {fmt!r}")
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_FIELDS, lineterminator="\n")
            writer.writeheader()
            for r in results:
                writer.writerow(r.to_row())
    else:
        doc = {"schema_version": SCHEMA_VERSION, "rows": [r.to_dict() for r in results]}
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
    return path


def load_report(path) -> list[dict]:
    """Read back the flat rows of a CSV or JSON report."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="") as f:
            return list(csv.DictReader(f))
    with open(path) as f:
        doc = json.load(f)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')}")
    return doc["rows"]


def strip_timing(row: dict) -> dict:
    """Drop wall-clock fields, leaving what must be reproducible run to run."""
    return {k: v for k, v in row.items() if k not in TIMING_FIELDS and k != "timing"}
