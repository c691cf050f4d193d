import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bilinear_image
from tokenmask.cost import PRESETS, head_cost
from tokenmask.errors import ConfigError, ShapeError
from tokenmask.heads import (
    HeadConfig,
    MaskProjection,
    QuerySet,
    image_space_head,
    project_queries,
    token_scores,
    token_space_head,
)
from tokenmask.tensor import OpCounter, as_tensor


def make_inputs(seed, nb, nq, c, hp, wp, dtype=np.float64):
    rng = np.random.default_rng(seed)
    t = as_tensor(rng.uniform(-1, 1, size=(nb, hp * wp, c)), dtype)
    mq = as_tensor(rng.uniform(-1, 1, size=(nb, nq, c)), dtype)
    return t, mq


def cfg_for(hp, wp, location, scale=1, patch=4):
    # patch/scale gives an output stride that upsamples the grid by `scale`.
    return HeadConfig(location, patch // scale, hp * patch, wp * patch, patch)


# -- project_queries ---------------------------------------------------------

def test_identity_projection_is_noop(rng):
    q = as_tensor(rng.normal(size=(2, 3, 4)), np.float64)
    out = project_queries(QuerySet(q), MaskProjection(np.eye(4)))
    np.testing.assert_array_equal(out, q)


def test_zero_queries_give_bias():
    bias = np.array([1.0, -2.0, 0.5])
    out = project_queries(np.zeros((1, 2, 3)), MaskProjection(np.eye(3) * 7, bias))
    np.testing.assert_array_equal(out, np.broadcast_to(bias, (1, 2, 3)))


def test_projection_matches_matrix_vector_loop():
    rng = np.random.default_rng(3)
    m = MaskProjection.random(3, rng, dtype=np.float64)
    q = rng.normal(size=(1, 2, 3))
    out = project_queries(q, m)
    for i in range(2):
        expected = [sum(m.weight[r, k] * q[0, i, k] for k in range(3)) + m.bias[r] for r in range(3)]
        np.testing.assert_allclose(out[0, i], expected, atol=1e-6)


def test_projection_random_bounds_and_errors():
    m = MaskProjection.random(16, np.random.default_rng(0))
    assert np.all(np.abs(m.weight) <= 0.25) and m.depth == 1
    assert MaskProjection.random(4, np.random.default_rng(0), depth=3).depth == 3
    with pytest.raises(ShapeError):
        MaskProjection(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        MaskProjection(np.eye(3), np.ones(2))
    with pytest.raises(ShapeError):
        project_queries(np.ones((1, 2, 4)), MaskProjection(np.eye(3)))


def test_zero_queries_rejected():
    with pytest.raises(ShapeError):
        QuerySet(np.zeros((1, 0, 4)))
    t, _ = make_inputs(0, 1, 1, 4, 2, 2)
    with pytest.raises(ShapeError):
        token_scores(t, as_tensor(np.zeros((1, 1, 4)))[:, :0])


# -- token_scores --------------------------------------------------------------

def test_token_scores_examples():
    c = OpCounter()
    assert token_scores(as_tensor([[[3.0]]]), as_tensor([[[2.0]]]), c).tolist() == [[[6.0]]]
    assert c.flops == 2
    t = as_tensor(np.array([[[1.0, 0.0], [2.0, 0.0], [-5.0, 0.0]]]))
    mq = as_tensor(np.array([[[0.0, 1.0]]]))
    assert np.all(token_scores(t, mq) == 0)


def test_token_scores_double_loop_oracle():
    t, mq = make_inputs(11, 1, 2, 3, 2, 2)
    c = OpCounter()
    out = token_scores(t, mq, c)
    for q in range(2):
        for i in range(4):
            np.testing.assert_allclose(out[0, q, i], sum(mq[0, q, k] * t[0, i, k] for k in range(3)),
                                       atol=1e-6)
    assert c.flops == 2 * 1 * 2 * 4 * 3


def test_token_scores_channel_mismatch():
    with pytest.raises(ShapeError, match="channel"):
        token_scores(as_tensor(np.ones((1, 4, 3))), as_tensor(np.ones((1, 2, 2))))


# -- heads ---------------------------------------------------------------------

def test_single_token_single_cell():
    t = as_tensor(np.array([[[1.0, 2.0, 3.0]]]))
    q = as_tensor(np.array([[[0.5, -1.0, 2.0]]]))
    mq = project_queries(q, MaskProjection(np.eye(3)))
    cfg = HeadConfig("none", 4, 4, 4, 4)
    out = image_space_head(t, mq, cfg)
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 0.5 - 2.0 + 6.0


def test_image_head_feature_upsample_brute_force():
    t, mq = make_inputs(21, 1, 3, 4, 2, 2)
    cfg = cfg_for(2, 2, "feature", scale=2)
    out = image_space_head(t, mq, cfg)
    assert out.shape == (1, 3, 4, 4)
    feat = t[0].reshape(2, 2, 4)
    channels = [np.array(bilinear_image(feat[:, :, c].tolist(), 4, 4)) for c in range(4)]
    for q in range(3):
        expected = sum(mq[0, q, c] * channels[c] for c in range(4))
        np.testing.assert_allclose(out[0, q], expected, atol=1e-5)


def test_none_heads_bitwise_equal_in_float64():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        nq, c, hp, wp = (int(v) for v in rng.integers(1, 9, size=4))
        t, mq = make_inputs(seed, 1, nq, c, hp, wp)
        cfg = cfg_for(hp, wp, "none")
        a = image_space_head(t, mq, cfg)
        b = token_space_head(t, mq, cfg)
        assert a.tobytes() == b.tobytes()


def test_logit_at_patch_stride_is_patch_scores():
    t, mq = make_inputs(4, 1, 3, 5, 3, 2)
    cfg = HeadConfig("logit", 4, 12, 8, 4)
    c = OpCounter()
    out = token_space_head(t, mq, cfg, c)
    np.testing.assert_array_equal(out, token_scores(t, mq).reshape(1, 3, 3, 2))
    assert "interpolate" not in c.by_stage()


def test_seeded_commutation_x4():
    t, mq = make_inputs(8, 1, 8, 16, 4, 4)
    img = image_space_head(t, mq, cfg_for(4, 4, "feature", scale=4))
    tok = token_space_head(t, mq, cfg_for(4, 4, "logit", scale=4))
    assert img.shape == tok.shape == (1, 8, 16, 16)
    assert np.max(np.abs(img - tok)) <= 1e-4


@given(st.integers(1, 16), st.integers(1, 16), st.integers(1, 8), st.integers(1, 8),
       st.sampled_from([2, 4]), st.integers(0, 2**16))
def test_commutation_property(nq, c, hp, wp, scale, seed):
    for dtype, tol in ((np.float32, 1e-4), (np.float64, 1e-10)):
        t, mq = make_inputs(seed, 1, nq, c, hp, wp, dtype)
        img = image_space_head(t, mq, cfg_for(hp, wp, "feature", scale))
        tok = token_space_head(t, mq, cfg_for(hp, wp, "logit", scale))
        assert np.max(np.abs(img - tok)) <= tol


def test_location_guards():
    t, mq = make_inputs(0, 1, 2, 3, 2, 2)
    with pytest.raises(ConfigError):
        image_space_head(t, mq, cfg_for(2, 2, "logit", 2))
    with pytest.raises(ConfigError):
        token_space_head(t, mq, cfg_for(2, 2, "feature", 2))
    with pytest.raises(ShapeError):
        token_space_head(t, mq, cfg_for(3, 2, "logit", 2))
    with pytest.raises(ConfigError):
        HeadConfig("bicubic")


def test_footprint_accounting():
    nb, nq, c, hp, wp, scale = 1, 4, 12, 4, 4, 4
    t, mq = make_inputs(1, nb, nq, c, hp, wp, np.float32)
    ci, ct = OpCounter(), OpCounter()
    image_space_head(t, mq, cfg_for(hp, wp, "feature", scale), ci)
    token_space_head(t, mq, cfg_for(hp, wp, "logit", scale), ct)
    h, w = hp * scale, wp * scale
    assert ct.peak_alloc_bytes == 4 * max(nb * nq * hp * wp, nb * nq * h * w)
    assert ci.peak_alloc_bytes >= 4 * nb * c * h * w
    assert ct.peak_alloc_bytes < ci.peak_alloc_bytes


def test_scoring_flops_match_at_patch_grid():
    t, mq = make_inputs(2, 2, 5, 7, 3, 3)
    ci, ct = OpCounter(), OpCounter()
    image_space_head(t, mq, cfg_for(3, 3, "none"), ci)
    token_space_head(t, mq, cfg_for(3, 3, "none"), ct)
    assert ci.by_stage()["score"].flops == ct.by_stage()["score"].flops == 2 * 2 * 5 * 9 * 7


@pytest.mark.parametrize("preset", sorted(PRESETS))
@pytest.mark.parametrize("nq", [100, 200])
def test_flop_ordering_for_presets(preset, nq):
    cfg_f = HeadConfig("feature", 4)
    cfg_l = HeadConfig("logit", 4)
    assert head_cost(cfg_l, PRESETS[preset], nq).flops < head_cost(cfg_f, PRESETS[preset], nq).flops


def test_batch_partition_independence():
    t, mq = make_inputs(6, 4, 3, 5, 2, 3, np.float32)
    for head, loc in ((image_space_head, "feature"), (token_space_head, "logit")):
        cfg = cfg_for(2, 3, loc, 2)
        whole = head(t, mq, cfg)
        parts = np.concatenate([head(as_tensor(t[i:i + 1]), as_tensor(mq[i:i + 1]), cfg)
                                for i in range(4)])
        np.testing.assert_allclose(whole, parts, atol=1e-6)
