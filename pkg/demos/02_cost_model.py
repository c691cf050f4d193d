"""Closed-form head costs for the standard ViT presets at 640x640.

Run with ``python3 demos/02_cost_model.py``.
"""

# %% Head FLOPs for feature upsampling (image head) and logit upsampling (token head).
from tokenmask import PRESETS, HeadConfig, backbone_cost, head_cost, peak_memory

feature, logit = HeadConfig("feature", 4), HeadConfig("logit", 4)
print(f"{'preset':<10}{'feature GF':>12}{'logit GF':>10}{'saved':>8}{'backbone GF':>13}")
for name, p in PRESETS.items():
    f = head_cost(feature, p, 200)
    l = head_cost(logit, p, 200)
    print(f"{name:<10}{f.gflops:>12.2f}{l.gflops:>10.2f}{1 - l.flops / f.flops:>8.1%}"
          f"{backbone_cost(p, 640, 640, 200) / 1e9:>13.1f}")

# %% Interpolation work scales with the channels being resized: C versus Qn.
p = PRESETS["vit-base"]
fi = head_cost(feature, p, 200).stage("interpolate").flops
li = head_cost(logit, p, 200).stage("interpolate").flops
print(f"vit-base interpolation ratio {fi / li:.2f} (C/Qn = {p.C / 200:.2f})")

# %% Largest activation in fp16. The token-head figure does not depend on C.
for name, p in PRESETS.items():
    img = peak_memory(feature, p, 200, 2)
    tok = peak_memory(logit, p, 200, 2)
    print(f"{name:<10} image {img / 2**20:7.1f} MiB   token {tok / 2**20:6.1f} MiB")

# %% Stride study: finer output means more pixels to fill.
for stride in (1, 4, 8, 16):
    cfg = HeadConfig("logit", stride)
    r = head_cost(cfg, PRESETS["vit-small"], 200)
    print(f"stride {stride:>2}: output {cfg.output_hw}, token head {r.gflops:.3f} GFLOPs")
