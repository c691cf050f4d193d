"""Token-space and image-space mask heads for query-based segmentation.

Both heads compute the same linear query-token scores. The image-space head
rebuilds and upsamples a C-channel feature map first, while the token-space
head scores tokens directly and upsamples the Q-channel logits. The package
provides the kernels, decoders, metrics, a closed-form cost model and a
benchmark harness.
"""

from .bench import BenchConfig, BenchResult, emit_report, load_report, run_bench, sweep_stride, sweep_upsampling
from .cost import (
    PRESETS,
    BackbonePreset,
    CostReport,
    backbone_cost,
    get_preset,
    head_cost,
    peak_memory,
    validate_against_counters,
)
from .decode import (
    Instance,
    PanopticMap,
    Segment,
    SemanticMap,
    Thresholds,
    instance_decode,
    panoptic_decode,
    semantic_decode,
)
from .errors import ConfigError, CounterMismatch, ShapeError
from .heads import (
    HeadConfig,
    MaskProjection,
    QuerySet,
    image_space_head,
    project_queries,
    token_scores,
    token_space_head,
)
from .interp import ResamplePlan, bilinear_resize, resolve_output_stride
from .metrics import miou_metric, pq_metric
from .synthetic import gen_synthetic
from .tensor import (
    OpCounter,
    as_tensor,
    elementwise,
    gemm,
    grid_to_scores,
    grid_to_tokens,
    scores_to_grid,
    tokens_to_grid,
)

__version__ = "0.1.0"
