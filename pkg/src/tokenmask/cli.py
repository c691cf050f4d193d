"""Command-line entry point: ``tokenmask-bench`` (or ``python -m tokenmask``).

Subcommands::

    bench        time both heads on one configuration
    sweep        upsampling ablation (presets x feature/logit/none) and/or
                 output-stride study (strides 1/4/8/16)
    cost         print the analytical cost reports for one configuration
    decode-demo  run the token head on synthetic data and decode it
    selftest     quick equivalence / cost-model checks

Exit status is 0 on success, 2 on a configuration error, 3 on an I/O
error and 1 when a correctness check fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .cost import PRESETS, backbone_cost, get_preset, head_cost, validate_against_counters
from .decode import Thresholds, instance_decode, panoptic_decode, semantic_decode
from .errors import ConfigError, CounterMismatch
from .heads import HeadConfig, image_space_head, project_queries, token_space_head
from .interp import OUTPUT_STRIDES
from .synthetic import gen_synthetic


def _size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        if len(parts) == 1:
            return int(parts[0]), int(parts[0])
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"size must look like 640 or 640x480, got {text!r}")


def _common(p: argparse.ArgumentParser, *, upsample_default="logit") -> None:
    p.add_argument("--preset", default="vit-small", choices=sorted(PRESETS))
    p.add_argument("--size", type=_size, default=(640, 640), help="image size, e.g. 640 or 640x480")
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--upsample", choices=["feature", "logit", "none"], default=upsample_default)
    p.add_argument("--stride", type=int, choices=OUTPUT_STRIDES, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=1)


def _timing(p: argparse.ArgumentParser) -> None:
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--threads", type=int, default=1, help="BLAS threads per run")
    p.add_argument("--precision", choices=sorted(bench_mod.PRECISIONS), default="float32")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tokenmask-bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="time both heads on one configuration")
    _common(p)
    _timing(p)

    p = sub.add_parser("sweep", help="ablation sweeps mirroring the upsampling and stride tables")
    _common(p)
    _timing(p)
    p.add_argument("--table", choices=["upsample", "stride", "all"], default="all")

    p = sub.add_parser("cost", help="analytical cost reports")
    _common(p)
    p.add_argument("--bytes-per-scalar", type=int, choices=[2, 4, 8], default=4)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("decode-demo", help="decode synthetic token-head masks")
    _common(p, upsample_default="logit")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--out", type=Path, default=None, help="write the panoptic map JSON here")

    sub.add_parser("selftest", help="quick correctness checks")
    return parser


def _bench_config(args, preset=None, location=None, stride=None) -> bench_mod.BenchConfig:
    h, w = args.size
    return bench_mod.BenchConfig(
        preset=preset or args.preset, image_h=h, image_w=w, Qn=args.queries,
        upsample_location=location or args.upsample,
        output_stride=stride if stride is not None else args.stride,
        batch=args.batch, repetitions=args.reps, warmup=args.warmup, seed=args.seed,
        precision=args.precision, threads=args.threads,
    )


def _print_rows(results) -> None:
    for r in results:
        row = r.to_row()
        print(f"{row['preset']:>9} {row['resolution']:>9} {row['upsample_location']:>7} "
              f"stride={row['stride']:<2} image={row['image_median_ms']:9.2f} ms "
              f"token={row['token_median_ms']:9.2f} ms head={row['head_gflops']:8.3f} GFLOPs "
              f"dev={row['max_deviation']:.2e}")


def _emit(results, fmt, out: Path | None) -> None:
    if out is None:
        _print_rows(results)
        return
    bench_mod.emit_report(results, fmt, out)
    print(f"wrote {out}")


def cmd_bench(args) -> int:
    cfg = _bench_config(args)
    _emit([bench_mod.run_bench(cfg)], args.format, args.out)
    return 0


def cmd_sweep(args) -> int:
    # Validate every configuration before running any of them.
    tables = ["upsample", "stride"] if args.table == "all" else [args.table]
    plans = {}
    if "upsample" in tables:
        plans["upsample"] = [_bench_config(args, preset=p, location=loc)
                             for p in PRESETS
                             for loc in ("feature", "logit", "none")]
    if "stride" in tables:
        plans["stride"] = [_bench_config(args, location="logit", stride=s) for s in OUTPUT_STRIDES]
    if args.out is not None and len(tables) > 1:
        args.out.mkdir(parents=True, exist_ok=True)
    for name, cfgs in plans.items():
        results = [bench_mod.run_bench(c) for c in cfgs]
        out = args.out
        if out is not None and len(tables) > 1:
            out = out / f"{name}.{args.format}"
        _emit(results, args.format, out)
    return 0


def cmd_cost(args) -> int:
    h, w = args.size
    preset = get_preset(args.preset)
    cfg = HeadConfig(args.upsample, args.stride, h, w, preset.patch)
    heads = ["image", "token"] if args.upsample == "none" else [
        "image" if args.upsample == "feature" else "token"]
    reports = [head_cost(cfg, preset, args.queries, batch=args.batch, head=hd,
                         bytes_per_scalar=args.bytes_per_scalar) for hd in heads]
    backbone = args.batch * backbone_cost(preset, h, w, args.queries)
    if args.format == "json":
        doc = {"schema_version": bench_mod.SCHEMA_VERSION,
               "reports": [r.to_dict() for r in reports],
               "backbone": {"flops": backbone, "modeled": True}}
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        lines = ["schema_version,head,stage,flops,bytes_read,bytes_written,peak_activation_bytes"]
        for r in reports:
            for s in r.stages:
                lines.append(f"{bench_mod.SCHEMA_VERSION},{r.head},{s.name},{s.flops},"
                             f"{s.bytes_read},{s.bytes_written},{s.peak_activation_bytes}")
            lines.append(f"{bench_mod.SCHEMA_VERSION},{r.head},total,{r.flops},"
                         f"{r.bytes_read},{r.bytes_written},{r.peak_activation_bytes}")
        lines.append(f"{bench_mod.SCHEMA_VERSION},backbone_modeled,total,{backbone},,,")
        text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
        print(f"wrote {args.out}")
    return 0


def cmd_decode_demo(args) -> int:
    h, w = args.size
    preset = get_preset(args.preset)
    cfg = HeadConfig(args.upsample, args.stride, h, w, preset.patch)
    inputs = gen_synthetic(args.seed, 1, cfg.num_tokens, preset.C, args.queries, args.classes,
                           dtype=np.float64)
    mq = project_queries(inputs.queries, inputs.projection)
    head = image_space_head if args.upsample == "feature" else token_space_head
    # Scale logits up so the synthetic masks are confidently on or off.
    masks = head(inputs.tokens, mq, cfg)[0] * 8.0
    classes = inputs.class_logits[0]
    is_thing = [k % 2 == 0 for k in range(args.classes)]
    sem = semantic_decode(masks, classes)
    pan = panoptic_decode(masks, classes, Thresholds(), is_thing=is_thing)
    inst = instance_decode(masks, classes, top_k=5)
    summary = {
        "mask_shape": list(masks.shape),
        "semantic_histogram": np.bincount(sem.category.ravel(), minlength=args.classes).tolist(),
        "panoptic_segments": [s.__dict__ for s in pan.segments],
        "void_pixels": int((pan.segment_id == 0).sum()),
        "top_instances": [{"query": i.query, "category": i.category, "score": round(i.score, 6),
                           "area": int(i.mask.sum())} for i in inst],
    }
    print(json.dumps(summary, indent=2))
    if args.out is not None:
        args.out.write_text(pan.to_json() + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_selftest(args) -> int:
    checks = []

    def check(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # report, don't abort the remaining checks
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")

    def equivalence():
        worst = 0.0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            hp, wp = rng.integers(1, 9, size=2)
            c, q = rng.integers(1, 17, size=2)
            cfg = HeadConfig("none", 16, int(hp) * 16, int(wp) * 16, 16)
            inp = gen_synthetic(seed, 1, cfg.num_tokens, int(c), int(q), 1, dtype=np.float64)
            mq = project_queries(inp.queries, inp.projection)
            a = image_space_head(inp.tokens, mq, cfg)
            b = token_space_head(inp.tokens, mq, cfg)
            worst = max(worst, float(np.max(np.abs(a - b))))
        return worst == 0.0, f"max |diff| = {worst:.1e} (float64, no upsampling)"

    def commutation():
        worst = 0.0
        for seed in range(20):
            for stride in (8, 4):
                cfg_f = HeadConfig("feature", stride, 64, 64, 16)
                cfg_l = HeadConfig("logit", stride, 64, 64, 16)
                inp = gen_synthetic(seed, 1, cfg_f.num_tokens, 16, 8, 1, dtype=np.float64)
                mq = project_queries(inp.queries, inp.projection)
                a = image_space_head(inp.tokens, mq, cfg_f)
                b = token_space_head(inp.tokens, mq, cfg_l)
                worst = max(worst, float(np.max(np.abs(a - b))))
        return worst <= 1e-10, f"max |diff| = {worst:.1e} (float64, x2/x4)"

    def counters():
        n = 0
        for preset in PRESETS.values():
            for loc, head in (("feature", "image"), ("logit", "token"), ("none", "image"), ("none", "token")):
                validate_against_counters(HeadConfig(loc, 4, 128, 128, 16), preset, 100, head=head)
                n += 1
        return True, f"{n} configurations match exactly"

    def ratio():
        cfg_f = HeadConfig("feature", 4, 640, 640, 16)
        cfg_l = HeadConfig("logit", 4, 640, 640, 16)
        out = []
        for preset in PRESETS.values():
            f = head_cost(cfg_f, preset, 200)
            t = head_cost(cfg_l, preset, 200)
            r = f.stage("interpolate").flops / t.stage("interpolate").flops
            out.append(r == preset.C / 200 and t.flops < f.flops)
        return all(out), "interpolation ratio == C/Qn and token < image for every preset"

    check("head equivalence", equivalence)
    check("upsampling commutation", commutation)
    check("cost model vs counters", counters)
    check("cost ratios", ratio)
    return 0 if all(checks) else 1


COMMANDS = {
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "cost": cmd_cost,
    "decode-demo": cmd_decode_demo,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CounterMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
