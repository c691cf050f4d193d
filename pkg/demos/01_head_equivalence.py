"""Two ways to predict masks from the same tokens.

Run with ``python3 demos/01_head_equivalence.py``.
"""

# %% Build a small seeded problem: a 4x6 patch grid with 12 channels and 5 queries.
import numpy as np

from tokenmask import (
    HeadConfig,
    OpCounter,
    gen_synthetic,
    image_space_head,
    project_queries,
    token_space_head,
)

patch = 16
cfg_none = HeadConfig("none", 16, 4 * patch, 6 * patch, patch)
inputs = gen_synthetic(seed=0, B=1, N=cfg_none.num_tokens, C=12, Qn=5, K=3, dtype=np.float64)
mq = project_queries(inputs.queries, inputs.projection)
print("tokens", inputs.tokens.shape, "mask embeddings", mq.shape)

# %% Without upsampling the heads do the same arithmetic in a different order.
a = image_space_head(inputs.tokens, mq, cfg_none)
b = token_space_head(inputs.tokens, mq, cfg_none)
print("patch-grid masks", a.shape, "bitwise equal:", a.tobytes() == b.tobytes())

# %% With x4 upsampling, resizing C feature channels or Qn logit channels gives
# the same masks because bilinear resampling and the dot product are linear.
cfg_f = HeadConfig("feature", 4, 4 * patch, 6 * patch, patch)
cfg_l = HeadConfig("logit", 4, 4 * patch, 6 * patch, patch)
ci, ct = OpCounter(), OpCounter()
img = image_space_head(inputs.tokens, mq, cfg_f, ci)
tok = token_space_head(inputs.tokens, mq, cfg_l, ct)
print("upsampled masks", img.shape, "max |diff| = %.1e" % np.max(np.abs(img - tok)))

# %% Where they differ is cost. Stage by stage:
for name, counter in (("image head", ci), ("token head", ct)):
    print(name)
    for stage, rec in counter.by_stage().items():
        print(f"  {stage:<12} flops={rec.flops:>8}  written={rec.bytes_written:>7} B")
    print(f"  largest tensor {counter.peak_alloc_bytes} B")
