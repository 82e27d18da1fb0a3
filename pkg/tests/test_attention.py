"""Tests for the four attention mechanisms.

The hand-case expectations are computed by scalar re-evaluations of the
scoring formulas written with plain Python loops and math.*, independent of
the library's matrix path.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuroncap import attention as attn
from neuroncap import numerics as nm
from neuroncap.errors import ConfigError, ShapeError


# ---------------------------------------------------------------------------
# scalar oracles (pure Python, no numpy matmul)


def _softmax_scalar(scores):
    m = max(scores)
    exps = [math.exp(s - m) for s in scores]
    z = sum(exps)
    return [e / z for e in exps]


def bahdanau_oracle(h, H, W, v):
    """e_s = v . tanh(W [h; h_s]) per position, then softmax and weighted sum."""
    scores = []
    for row in H:
        cat = list(h) + list(row)
        hidden = [math.tanh(sum(W[i][j] * cat[j] for j in range(len(cat)))) for i in range(len(W))]
        scores.append(sum(v[i] * hidden[i] for i in range(len(v))))
    weights = _softmax_scalar(scores)
    context = [sum(weights[s] * H[s][j] for s in range(len(H))) for j in range(len(H[0]))]
    return weights, context


def luong_oracle(h, H, W):
    """e_s = h . (W h_s) per position."""
    scores = []
    for row in H:
        wh = [sum(W[i][j] * row[j] for j in range(len(row))) for i in range(len(W))]
        scores.append(sum(h[i] * wh[i] for i in range(len(h))))
    weights = _softmax_scalar(scores)
    context = [sum(weights[s] * H[s][j] for s in range(len(H))) for j in range(len(H[0]))]
    return weights, context


def self_query_oracle(h, H, Wq, Wk, Wv):
    """q = h Wq; e_s = q . (h_s Wk) / sqrt(d_k); context = sum_s a_s (h_s Wv)."""
    d_k = len(Wk[0])
    q = [sum(h[i] * Wq[i][j] for i in range(len(h))) for j in range(d_k)]
    keys = [[sum(row[i] * Wk[i][j] for i in range(len(row))) for j in range(d_k)] for row in H]
    vals = [[sum(row[i] * Wv[i][j] for i in range(len(row))) for j in range(d_k)] for row in H]
    scores = [sum(q[j] * k[j] for j in range(d_k)) / math.sqrt(d_k) for k in keys]
    weights = _softmax_scalar(scores)
    context = [sum(weights[s] * vals[s][j] for s in range(len(H))) for j in range(d_k)]
    return weights, context


def _rand_params(mechanism, d_h, d_s, d_a, d_k, seed):
    rng = np.random.default_rng(seed)
    return attn.init_attention_params(mechanism, d_h, d_s, d_a, d_k, rng, init_scale=0.5)


# ---------------------------------------------------------------------------
# additive (bahdanau)


def test_bahdanau_single_source_state():
    params = _rand_params("bahdanau", 3, 2, 4, 2, seed=0).bahdanau
    out = attn.bahdanau_attend(np.ones((1, 3)), np.array([[0.4, -1.0]]), params)
    np.testing.assert_allclose(out.weights, [[1.0]], atol=1e-15)
    np.testing.assert_allclose(out.context, [[0.4, -1.0]], atol=1e-15)


def test_bahdanau_identical_states_symmetric():
    params = _rand_params("bahdanau", 3, 2, 4, 2, seed=1).bahdanau
    src = np.array([[0.7, 0.1], [0.7, 0.1]])
    out = attn.bahdanau_attend(np.array([[0.2, -0.4, 1.0]]), src, params)
    np.testing.assert_allclose(out.weights, [[0.5, 0.5]], atol=1e-12)


def test_bahdanau_matches_scalar_oracle():
    h = [0.3, -0.7]
    H = [[1.0, 0.5, -0.2], [0.0, 2.0, 0.3], [-1.0, 0.4, 0.9]]
    W = [[0.2, -0.1, 0.4, 0.0, 0.3], [0.1, 0.5, -0.3, 0.2, -0.2]]
    v = [0.7, -0.4]
    exp_w, exp_c = bahdanau_oracle(h, H, W, v)
    out = attn.bahdanau_attend(
        np.array([h]), np.array(H), attn.BahdanauParams(w=np.array(W), v=np.array([[vi] for vi in v]))
    )
    np.testing.assert_allclose(out.weights, [exp_w], atol=1e-12)
    np.testing.assert_allclose(out.context, [exp_c], atol=1e-12)


def test_bahdanau_shape_mismatch():
    params = _rand_params("bahdanau", 3, 2, 4, 2, seed=2).bahdanau
    with pytest.raises(ShapeError):
        attn.bahdanau_attend(np.ones((1, 5)), np.ones((2, 2)), params)


# ---------------------------------------------------------------------------
# bilinear (luong)


def test_luong_zero_form_gives_uniform_weights():
    out = attn.luong_attend(np.ones((1, 3)), np.arange(8.0).reshape(4, 2), attn.LuongParams(w=np.zeros((3, 2))))
    np.testing.assert_allclose(out.weights, np.full((1, 4), 0.25), atol=1e-15)


def test_luong_single_source_state():
    params = _rand_params("luong", 3, 2, 4, 2, seed=3).luong
    out = attn.luong_attend(np.ones((1, 3)), np.array([[5.0, 6.0]]), params)
    np.testing.assert_allclose(out.weights, [[1.0]], atol=1e-15)


def test_luong_matches_scalar_oracle():
    h = [0.9, -0.3]
    H = [[1.0, 2.0], [0.5, -1.5], [2.0, 0.1]]
    W = [[0.6, -0.2], [0.3, 0.8]]
    exp_w, exp_c = luong_oracle(h, H, W)
    out = attn.luong_attend(np.array([h]), np.array(H), attn.LuongParams(w=np.array(W)))
    np.testing.assert_allclose(out.weights, [exp_w], atol=1e-12)
    np.testing.assert_allclose(out.context, [exp_c], atol=1e-12)


# ---------------------------------------------------------------------------
# scaled dot-product ("self")


def test_self_grid_single_position_returns_value_projection():
    rng = np.random.default_rng(4)
    params = attn.SelfAttentionParams(
        w_q=rng.normal(size=(3, 2)), w_k=rng.normal(size=(3, 2)), w_v=rng.normal(size=(3, 2))
    )
    src = rng.normal(size=(1, 3))
    grid = attn.self_attend(src, params)
    np.testing.assert_allclose(grid.weights, [[1.0]], atol=1e-15)
    np.testing.assert_allclose(grid.outputs, src @ params.w_v, atol=1e-12)


def test_self_grid_zero_query_key_gives_mean_of_values():
    rng = np.random.default_rng(5)
    w_v = rng.normal(size=(3, 3))
    params = attn.SelfAttentionParams(w_q=np.zeros((3, 3)), w_k=np.zeros((3, 3)), w_v=w_v)
    src = rng.normal(size=(4, 3))
    grid = attn.self_attend(src, params)
    expected = np.repeat((src @ w_v).mean(axis=0, keepdims=True), 4, axis=0)
    np.testing.assert_allclose(grid.outputs, expected, atol=1e-12)


def test_self_grid_hand_case_with_scaling():
    # 2x2 case: verify the 1/sqrt(d_k) scaling against a scalar computation
    src = [[1.0, 0.0], [0.0, 2.0]]
    wq = [[0.5, -0.1], [0.3, 0.7]]
    wk = [[0.2, 0.4], [-0.6, 0.1]]
    wv = [[1.0, 0.0], [0.5, -0.5]]
    params = attn.SelfAttentionParams(w_q=np.array(wq), w_k=np.array(wk), w_v=np.array(wv))
    grid = attn.self_attend(np.array(src), params)
    for row_idx in range(2):
        exp_w, exp_c = self_query_oracle(src[row_idx], src, wq, wk, wv)
        np.testing.assert_allclose(grid.weights[row_idx], exp_w, atol=1e-12)
        np.testing.assert_allclose(grid.outputs[row_idx], exp_c, atol=1e-12)


def test_self_query_matches_scalar_oracle():
    h = [0.4, -1.2, 0.9]
    H = [[1.0, 0.3], [-0.5, 0.8], [0.2, 0.2], [0.0, -1.0]]
    wq = [[0.3, 0.1], [-0.2, 0.5], [0.7, -0.4]]
    wk = [[0.6, -0.3], [0.2, 0.9]]
    wv = [[-0.1, 0.4], [0.8, 0.2]]
    exp_w, exp_c = self_query_oracle(h, H, wq, wk, wv)
    out = attn.self_attend_query(
        np.array([h]), np.array(H),
        attn.SelfAttentionParams(w_q=np.array(wq), w_k=np.array(wk), w_v=np.array(wv)),
    )
    np.testing.assert_allclose(out.weights, [exp_w], atol=1e-12)
    np.testing.assert_allclose(out.context, [exp_c], atol=1e-12)


# ---------------------------------------------------------------------------
# fused ("multi")


def test_multi_context_is_exact_sum_of_subcontexts():
    rng = np.random.default_rng(6)
    for seed in range(20):
        params = _rand_params("multi", 4, 3, 5, 3, seed=seed)
        h = rng.normal(size=(1, 4))
        src = rng.normal(size=(5, 3))
        fused = attn.multi_attend(h, src, params)
        b = attn.bahdanau_attend(h, src, params.bahdanau)
        l = attn.luong_attend(h, src, params.luong)
        s = attn.self_attend_query(h, src, params.selfattn)
        np.testing.assert_allclose(fused.context, b.context + l.context + s.context, atol=1e-12)


def test_multi_zero_value_projection_reduces_to_source_mechanisms():
    params = _rand_params("multi", 4, 3, 5, 3, seed=11)
    params.selfattn.w_v = np.zeros_like(params.selfattn.w_v)
    h = np.random.default_rng(12).normal(size=(1, 4))
    src = np.random.default_rng(13).normal(size=(6, 3))
    fused = attn.multi_attend(h, src, params)
    b = attn.bahdanau_attend(h, src, params.bahdanau)
    l = attn.luong_attend(h, src, params.luong)
    np.testing.assert_allclose(fused.context, b.context + l.context, atol=1e-12)


def test_multi_all_zero_params_degenerates_to_uniform():
    # both source-weighted mechanisms give the source mean; the value-side
    # context collapses to zero with a zero value projection
    params = _rand_params("multi", 4, 3, 5, 3, seed=14)
    for arr_holder, names in [
        (params.bahdanau, ("w", "v")),
        (params.luong, ("w",)),
        (params.selfattn, ("w_q", "w_k", "w_v")),
    ]:
        for name in names:
            setattr(arr_holder, name, np.zeros_like(getattr(arr_holder, name)))
    src = np.random.default_rng(15).normal(size=(5, 3))
    fused = attn.multi_attend(np.zeros((1, 4)), src, params)
    np.testing.assert_allclose(fused.context, 2.0 * src.mean(axis=0, keepdims=True), atol=1e-12)
    for w in (fused.bahdanau_weights, fused.luong_weights, fused.self_weights):
        np.testing.assert_allclose(w, np.full((1, 5), 0.2), atol=1e-15)


def test_multi_requires_dk_equal_ds():
    with pytest.raises(ConfigError):
        _rand_params("multi", 4, 3, 5, 2, seed=0)


def test_unknown_mechanism_rejected():
    with pytest.raises(ConfigError):
        attn.check_mechanism("rotary")


# ---------------------------------------------------------------------------
# invariants


def _contexts_and_weights(mechanism, params, h, src):
    out = attn.attend(mechanism, h, src, params)
    if mechanism == "multi":
        return out.context, [out.bahdanau_weights, out.luong_weights, out.self_weights]
    return out.context, [out.weights]


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(attn.MECHANISMS),
    st.integers(min_value=0, max_value=10**6),
    st.integers(min_value=1, max_value=7),
)
def test_weights_form_a_distribution(mechanism, seed, s_count):
    rng = np.random.default_rng(seed)
    params = _rand_params(mechanism, 3, 2, 4, 2, seed=seed)
    h = rng.normal(scale=3.0, size=(1, 3))
    src = rng.normal(scale=3.0, size=(s_count, 2))
    _, weight_rows = _contexts_and_weights(mechanism, params, h, src)
    for w in weight_rows:
        assert (w >= 0).all()
        assert abs(w.sum() - 1.0) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["bahdanau", "luong"]), st.integers(min_value=0, max_value=10**6))
def test_source_context_stays_in_coordinate_hull(mechanism, seed):
    rng = np.random.default_rng(seed)
    params = _rand_params(mechanism, 3, 4, 4, 4, seed=seed)
    h = rng.normal(size=(1, 3))
    src = rng.normal(size=(5, 4))
    context, _ = _contexts_and_weights(mechanism, params, h, src)
    assert (context >= src.min(axis=0) - 1e-12).all()
    assert (context <= src.max(axis=0) + 1e-12).all()


@pytest.mark.parametrize("mechanism", ["bahdanau", "luong"])
def test_permuting_sources_permutes_weights_and_fixes_context(mechanism):
    rng = np.random.default_rng(21)
    params = _rand_params(mechanism, 3, 4, 4, 4, seed=21)
    h = rng.normal(size=(1, 3))
    src = rng.normal(size=(6, 4))
    perm = rng.permutation(6)
    base_c, (base_w,) = _contexts_and_weights(mechanism, params, h, src)
    perm_c, (perm_w,) = _contexts_and_weights(mechanism, params, h, src[perm])
    np.testing.assert_allclose(perm_w[0], base_w[0][perm], atol=1e-12)
    np.testing.assert_allclose(perm_c, base_c, atol=1e-12)


# ---------------------------------------------------------------------------
# gradients


def _param_arrays(mechanism, params):
    if mechanism == "bahdanau":
        return [params.bahdanau.w, params.bahdanau.v]
    if mechanism == "luong":
        return [params.luong.w]
    if mechanism == "self":
        return [params.selfattn.w_q, params.selfattn.w_k, params.selfattn.w_v]
    return [
        params.bahdanau.w, params.bahdanau.v,
        params.luong.w,
        params.selfattn.w_q, params.selfattn.w_k, params.selfattn.w_v,
    ]


def _rebuild(mechanism, d_k, tensors):
    if mechanism == "bahdanau":
        return attn.AttentionParams(mechanism, d_k, bahdanau=attn.BahdanauParams(*tensors))
    if mechanism == "luong":
        return attn.AttentionParams(mechanism, d_k, luong=attn.LuongParams(*tensors))
    if mechanism == "self":
        return attn.AttentionParams(mechanism, d_k, selfattn=attn.SelfAttentionParams(*tensors))
    return attn.AttentionParams(
        mechanism, d_k,
        bahdanau=attn.BahdanauParams(*tensors[0:2]),
        luong=attn.LuongParams(tensors[2]),
        selfattn=attn.SelfAttentionParams(*tensors[3:6]),
    )


def attention_grad_check(mechanism: str, seed: int, tol: float = 1e-4) -> nm.GradCheckResult:
    """End-to-end check of d(r . context)/d(params, h_t) for one mechanism."""
    rng = np.random.default_rng(seed)
    d_h, d_s, d_a, d_k = 3, 2, 3, 2
    params = _rand_params(mechanism, d_h, d_s, d_a, d_k, seed=seed)
    src = rng.normal(size=(3, d_s))
    probe = rng.normal(size=(d_s if mechanism != "self" else d_k, 1))
    arrays = _param_arrays(mechanism, params) + [rng.normal(size=(1, d_h))]

    def fn(tape, *leaves):
        rebuilt = _rebuild(mechanism, d_k, list(leaves[:-1]))
        out = attn.attend(mechanism, leaves[-1], src, rebuilt)
        return nm.matmul(out.context, probe)

    return nm.grad_check(fn, arrays, eps=1e-5, tol=tol)


@pytest.mark.parametrize("mechanism", attn.MECHANISMS)
def test_mechanism_gradients_match_finite_differences(mechanism):
    for seed in range(5):
        res = attention_grad_check(mechanism, seed)
        assert res.ok, (mechanism, seed, res)
