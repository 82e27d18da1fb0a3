"""Four interchangeable attention mechanisms over a grid of source states.

Source states are an S x d_s matrix H (one exemplar feature vector per
row).  Each mechanism scores positions against a 1 x d_h decoder query
h_t, normalizes the scores with a stable softmax, and produces a context
vector:

  additive ("bahdanau"):   e_s = v_a^T tanh(W_a [h_t; h_s]),  context = sum_s a_s h_s
  bilinear ("luong"):      e_s = h_t W_a h_s^T,               context = sum_s a_s h_s
  scaled dot ("self"):     e_s = (h_t W_Q)(h_s W_K)^T / sqrt(d_k),
                           context = sum_s a_s (h_s W_V)
  fused ("multi"):         context = sum of the three contexts above,
                           with the three weight vectors kept separately

The fused mechanism adds context vectors elementwise, so in that mode the
value projection width d_k must equal d_s.  All functions run on plain
arrays or on tape tensors (see numerics); gradients flow through every
parameter and through h_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ShapeError

MECHANISMS = ("bahdanau", "luong", "self", "multi")


def check_mechanism(name: str) -> str:
    if name not in MECHANISMS:
        raise ConfigError(f"unknown attention mechanism '{name}'; expected one of {MECHANISMS}")
    return name


def _shape(x) -> tuple[int, int]:
    return x.shape if isinstance(x, np.ndarray) else x.value.shape


@dataclass
class BahdanauParams:
    """w: (d_a, d_h + d_s) combining matrix; v: (d_a, 1) scoring vector."""

    w: object
    v: object


@dataclass
class LuongParams:
    """w: (d_h, d_s) bilinear form."""

    w: object


@dataclass
class SelfAttentionParams:
    """w_q maps the query side (d_s in grid form, d_h in decoder form) to
    d_k; w_k and w_v map source rows to d_k."""

    w_q: object
    w_k: object
    w_v: object


@dataclass
class AttentionParams:
    """Parameter bundle for a chosen mechanism ("multi" carries all three)."""

    mechanism: str
    d_k: int
    bahdanau: BahdanauParams | None = None
    luong: LuongParams | None = None
    selfattn: SelfAttentionParams | None = None


def init_attention_params(
    mechanism: str,
    d_h: int,
    d_s: int,
    d_a: int,
    d_k: int,
    rng: np.random.Generator,
    init_scale: float = 0.08,
) -> AttentionParams:
    """Uniform(-init_scale, init_scale) parameters for one mechanism.

    For "self" and "multi" in decoder use the context is a combination of
    value projections, so d_k must equal d_s for it to be summable with /
    consumable as a d_s-sized context.
    """
    check_mechanism(mechanism)
    if d_k < 1:
        raise ConfigError(f"d_k must be >= 1, got {d_k}")
    if mechanism in ("self", "multi") and d_k != d_s:
        raise ConfigError(f"mechanism '{mechanism}' requires d_k == d_s, got d_k={d_k}, d_s={d_s}")

    def u(shape):
        return rng.uniform(-init_scale, init_scale, shape)

    params = AttentionParams(mechanism=mechanism, d_k=d_k)
    if mechanism in ("bahdanau", "multi"):
        params.bahdanau = BahdanauParams(w=u((d_a, d_h + d_s)), v=u((d_a, 1)))
    if mechanism in ("luong", "multi"):
        params.luong = LuongParams(w=u((d_h, d_s)))
    if mechanism in ("self", "multi"):
        params.selfattn = SelfAttentionParams(w_q=u((d_h, d_k)), w_k=u((d_s, d_k)), w_v=u((d_s, d_k)))
    return params


@dataclass
class AttentionOutput:
    """weights: 1 x S distribution over source positions; context: 1 x d."""

    weights: object
    context: object


@dataclass
class MultiAttentionOutput:
    """Fused context plus the three per-mechanism weight vectors."""

    context: object
    bahdanau_weights: object
    luong_weights: object
    self_weights: object


def _check_query(h_t, src) -> None:
    hs, ss = _shape(h_t), _shape(src)
    if hs[0] != 1:
        raise ShapeError(f"decoder query must be a single row, got {hs}")
    if ss[0] < 1:
        raise ShapeError(f"source states must be nonempty, got {ss}")


def bahdanau_attend(h_t, src, params: BahdanauParams) -> AttentionOutput:
    """Additive attention: score each position with v^T tanh(W [h_t; h_s])."""
    _check_query(h_t, src)
    d_h = _shape(h_t)[1]
    d_s = _shape(src)[1]
    if _shape(params.w)[1] != d_h + d_s:
        raise ShapeError(
            f"additive attention: W has {_shape(params.w)} but [h_t; h_s] has width {d_h + d_s}"
        )
    s_count = _shape(src)[0]
    queries = nm.tile_rows(h_t, s_count)                 # S x d_h
    combined = nm.concat_cols(queries, src)              # S x (d_h + d_s)
    hidden = nm.tanh(nm.matmul(combined, nm.transpose(params.w)))  # S x d_a
    scores = nm.transpose(nm.matmul(hidden, params.v))   # 1 x S
    weights = nm.softmax(scores)
    context = nm.matmul(weights, src)                    # 1 x d_s
    return AttentionOutput(weights=weights, context=context)


def luong_attend(h_t, src, params: LuongParams) -> AttentionOutput:
    """Bilinear attention: score each position with h_t W h_s^T."""
    _check_query(h_t, src)
    if _shape(params.w) != (_shape(h_t)[1], _shape(src)[1]):
        raise ShapeError(
            f"bilinear attention: W has {_shape(params.w)}, expected ({_shape(h_t)[1]}, {_shape(src)[1]})"
        )
    scores = nm.matmul(nm.matmul(h_t, params.w), nm.transpose(src))  # 1 x S
    weights = nm.softmax(scores)
    context = nm.matmul(weights, src)
    return AttentionOutput(weights=weights, context=context)


@dataclass
class SelfAttentionGrid:
    """Row-wise self-attention over the source grid: weights S x S, outputs S x d_k."""

    weights: object
    outputs: object


def self_attend(src, params: SelfAttentionParams) -> SelfAttentionGrid:
    """Scaled dot-product self-attention of the source grid with itself."""
    if _shape(src)[0] < 1:
        raise ShapeError("source states must be nonempty")
    d_k = _shape(params.w_k)[1]
    if d_k < 1:
        raise ConfigError("d_k must be >= 1")
    q = nm.matmul(src, params.w_q)
    k = nm.matmul(src, params.w_k)
    v = nm.matmul(src, params.w_v)
    scores = nm.scale(nm.matmul(q, nm.transpose(k)), 1.0 / math.sqrt(d_k))  # S x S
    weights = nm.softmax_rows(scores)
    return SelfAttentionGrid(weights=weights, outputs=nm.matmul(weights, v))


def self_attend_query(h_t, src, params: SelfAttentionParams) -> AttentionOutput:
    """Decoder form: the single query row is h_t projected by w_q."""
    _check_query(h_t, src)
    if _shape(params.w_q)[0] != _shape(h_t)[1]:
        raise ShapeError(
            f"self attention: w_q has {_shape(params.w_q)} but query width is {_shape(h_t)[1]}"
        )
    d_k = _shape(params.w_k)[1]
    q = nm.matmul(h_t, params.w_q)                       # 1 x d_k
    k = nm.matmul(src, params.w_k)                       # S x d_k
    v = nm.matmul(src, params.w_v)                       # S x d_k
    scores = nm.scale(nm.matmul(q, nm.transpose(k)), 1.0 / math.sqrt(d_k))  # 1 x S
    weights = nm.softmax(scores)
    return AttentionOutput(weights=weights, context=nm.matmul(weights, v))


def multi_attend(h_t, src, params: AttentionParams) -> MultiAttentionOutput:
    """Sum the three mechanisms' context vectors elementwise.

    Requires all three parameter groups and d_k == d_s so the value-side
    context is dimension-compatible with the two weighted-source contexts.
    """
    if params.bahdanau is None or params.luong is None or params.selfattn is None:
        raise ConfigError("fused attention requires all three parameter groups")
    b = bahdanau_attend(h_t, src, params.bahdanau)
    l = luong_attend(h_t, src, params.luong)
    s = self_attend_query(h_t, src, params.selfattn)
    if _shape(s.context) != _shape(b.context):
        raise ShapeError(
            f"fused attention: value context {_shape(s.context)} does not match source context {_shape(b.context)}"
        )
    context = nm.add(nm.add(b.context, l.context), s.context)
    return MultiAttentionOutput(
        context=context,
        bahdanau_weights=b.weights,
        luong_weights=l.weights,
        self_weights=s.weights,
    )


def attend(mechanism: str, h_t, src, params: AttentionParams):
    """Dispatch to the configured mechanism; every result has .context."""
    check_mechanism(mechanism)
    if mechanism == "bahdanau":
        return bahdanau_attend(h_t, src, params.bahdanau)
    if mechanism == "luong":
        return luong_attend(h_t, src, params.luong)
    if mechanism == "self":
        return self_attend_query(h_t, src, params.selfattn)
    return multi_attend(h_t, src, params)
