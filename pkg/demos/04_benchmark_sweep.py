"""Timing both heads across presets, upsampling locations and strides.

Run with ``python3 demos/04_benchmark_sweep.py [out_dir]``. Takes roughly
ten seconds on one CPU core.
"""

# %% Upsampling sweep: 4 presets x {feature, logit, none}.
import sys
from pathlib import Path

from tokenmask import emit_report, sweep_stride, sweep_upsampling

rows = sweep_upsampling(repetitions=3)
print(f"{'preset':<10}{'location':<9}{'image ms':>10}{'token ms':>10}{'dev':>10}")
for r in rows:
    row = r.to_row()
    print(f"{row['preset']:<10}{row['upsample_location']:<9}{row['image_median_ms']:>10.2f}"
          f"{row['token_median_ms']:>10.2f}{row['max_deviation']:>10.1e}")

# %% Stride sweep on vit-small with logit upsampling.
strides = sweep_stride("vit-small", repetitions=3)
for r in strides:
    row = r.to_row()
    print(f"stride {row['stride']:>2}: image {row['image_median_ms']:8.2f} ms  "
          f"token {row['token_median_ms']:8.2f} ms  head {row['head_gflops']:.3f} GFLOPs")

# %% Optionally write both reports.
if len(sys.argv) > 1:
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    print(emit_report(rows, "csv", out / "upsample.csv"))
    print(emit_report(strides, "json", out / "stride.json"))
