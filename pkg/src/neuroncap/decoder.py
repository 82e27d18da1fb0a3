"""LSTM decoding step fused with a chosen attention mechanism.

One step: attend over the source grid with the previous hidden state as
query, feed [token embedding; context] through a standard LSTM cell, and
project [new hidden; context] to vocabulary logits.  Greedy and beam-search
generation never emit PAD or BOS; hypothesis scores are exact sums of
per-step log-softmax values over the full vocabulary (no length
normalization), so beam results can be re-scored through step() and checked
against exhaustive enumeration on tiny models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .attention import AttentionParams, attend, check_mechanism, init_attention_params
from .data import BOS, EOS, PAD
from .errors import ConfigError, ShapeError


@dataclass
class ModelDims:
    """Static widths of one caption model."""

    vocab_size: int
    d_e: int = 32
    d_h: int = 64
    d_s: int = 16
    d_a: int = 64
    d_k: int = 16

    def __post_init__(self):
        for name in ("vocab_size", "d_e", "d_h", "d_s", "d_a", "d_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.vocab_size < 4:
            raise ConfigError("vocab_size must cover the four reserved ids")


@dataclass
class DecoderParams:
    """All learned arrays.  embedding row 0 (PAD) stays pinned at zero.

    Gate weights are fused: w_lstm maps [x; h_prev] to the pre-activations
    of (input, forget, candidate, output) gates side by side.
    """

    embedding: object      # (|V|, d_e)
    w_lstm: object         # (d_e + d_s + d_h, 4 d_h)
    b_lstm: object         # (1, 4 d_h)
    w_out: object          # (d_h + d_s, |V|)
    b_out: object          # (1, |V|)
    w_init_h: object       # (d_s, d_h)
    b_init_h: object       # (1, d_h)
    w_init_c: object       # (d_s, d_h)
    b_init_c: object       # (1, d_h)
    attention: AttentionParams

    def named_arrays(self) -> list[tuple[str, object]]:
        """Flat (name, array) view over every parameter, attention included."""
        pairs = [
            ("embedding", self.embedding),
            ("w_lstm", self.w_lstm),
            ("b_lstm", self.b_lstm),
            ("w_out", self.w_out),
            ("b_out", self.b_out),
            ("w_init_h", self.w_init_h),
            ("b_init_h", self.b_init_h),
            ("w_init_c", self.w_init_c),
            ("b_init_c", self.b_init_c),
        ]
        a = self.attention
        if a.bahdanau is not None:
            pairs += [("attn.bahdanau.w", a.bahdanau.w), ("attn.bahdanau.v", a.bahdanau.v)]
        if a.luong is not None:
            pairs += [("attn.luong.w", a.luong.w)]
        if a.selfattn is not None:
            pairs += [
                ("attn.self.w_q", a.selfattn.w_q),
                ("attn.self.w_k", a.selfattn.w_k),
                ("attn.self.w_v", a.selfattn.w_v),
            ]
        return pairs


@dataclass
class CaptionModel:
    """Dims + mechanism + parameters, plus the vocabulary it indexes."""

    dims: ModelDims
    mechanism: str
    params: DecoderParams
    id_to_token: list[str] = field(default_factory=list)
    pad_len: int = 0


def init_model(
    dims: ModelDims,
    mechanism: str,
    seed: int,
    id_to_token: list[str] | None = None,
    pad_len: int = 0,
    init_scale: float = 0.08,
) -> CaptionModel:
    """Seeded uniform(-init_scale, init_scale) initialization."""
    check_mechanism(mechanism)
    rng = np.random.default_rng(seed)

    def u(shape):
        return rng.uniform(-init_scale, init_scale, shape)

    embedding = u((dims.vocab_size, dims.d_e))
    embedding[PAD] = 0.0
    params = DecoderParams(
        embedding=embedding,
        w_lstm=u((dims.d_e + dims.d_s + dims.d_h, 4 * dims.d_h)),
        b_lstm=u((1, 4 * dims.d_h)),
        w_out=u((dims.d_h + dims.d_s, dims.vocab_size)),
        b_out=u((1, dims.vocab_size)),
        w_init_h=u((dims.d_s, dims.d_h)),
        b_init_h=u((1, dims.d_h)),
        w_init_c=u((dims.d_s, dims.d_h)),
        b_init_c=u((1, dims.d_h)),
        attention=init_attention_params(mechanism, dims.d_h, dims.d_s, dims.d_a, dims.d_k, rng, init_scale),
    )
    return CaptionModel(
        dims=dims,
        mechanism=mechanism,
        params=params,
        id_to_token=list(id_to_token or []),
        pad_len=pad_len,
    )


@dataclass
class DecoderState:
    """LSTM hidden/cell rows plus the context used at the previous step."""

    h: object           # 1 x d_h
    c: object           # 1 x d_h
    prev_context: object  # 1 x d_s


def init_state(src, params: DecoderParams) -> DecoderState:
    """Learned linear map of the mean source state; zero previous context."""
    s_count = src.shape[0] if isinstance(src, np.ndarray) else src.value.shape[0]
    mean_src = nm.scale(nm.matmul(np.ones((1, s_count)) / s_count, src), 1.0)
    h = nm.add(nm.matmul(mean_src, params.w_init_h), params.b_init_h)
    c = nm.add(nm.matmul(mean_src, params.w_init_c), params.b_init_c)
    d_s = src.shape[1] if isinstance(src, np.ndarray) else src.value.shape[1]
    return DecoderState(h=h, c=c, prev_context=np.zeros((1, d_s)))


def step(prev_token: int, state: DecoderState, src, params: DecoderParams, mechanism: str):
    """One decode step: (logits over |V|, next state)."""
    check_mechanism(mechanism)
    emb = nm.take_row(params.embedding, prev_token)
    out = attend(mechanism, state.h, src, params.attention)
    context = out.context

    x = nm.concat_cols(emb, context)
    z = nm.concat_cols(x, state.h)
    pre = nm.add(nm.matmul(z, params.w_lstm), params.b_lstm)
    d_h = state.h.shape[1] if isinstance(state.h, np.ndarray) else state.h.value.shape[1]
    gate_i = nm.sigmoid(nm.slice_cols(pre, 0, d_h))
    gate_f = nm.sigmoid(nm.slice_cols(pre, d_h, 2 * d_h))
    gate_g = nm.tanh(nm.slice_cols(pre, 2 * d_h, 3 * d_h))
    gate_o = nm.sigmoid(nm.slice_cols(pre, 3 * d_h, 4 * d_h))
    c_new = nm.add(nm.mul(gate_f, state.c), nm.mul(gate_i, gate_g))
    h_new = nm.mul(gate_o, nm.tanh(c_new))

    logits = nm.add(nm.matmul(nm.concat_cols(h_new, context), params.w_out), params.b_out)
    return logits, DecoderState(h=h_new, c=c_new, prev_context=context)


def _masked_argmax(logits: np.ndarray) -> int:
    """Highest-logit token excluding PAD and BOS; ties go to the lowest id."""
    masked = logits[0].copy()
    masked[PAD] = -np.inf
    masked[BOS] = -np.inf
    return int(np.argmax(masked))


def greedy_decode(src, params: DecoderParams, mechanism: str, max_len: int) -> list[int]:
    """Argmax decoding from BOS; stops at EOS or after max_len emissions.

    The returned sequence excludes BOS and includes EOS when emitted.
    """
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    state = init_state(src, params)
    prev = BOS
    out: list[int] = []
    for _ in range(max_len):
        logits, state = step(prev, state, src, params, mechanism)
        token = _masked_argmax(logits)
        out.append(token)
        if token == EOS:
            break
        prev = token
    return out


@dataclass
class _Hypothesis:
    tokens: tuple[int, ...]
    logprob: float
    state: DecoderState
    prev: int


def beam_decode(
    src, params: DecoderParams, mechanism: str, width: int, max_len: int
) -> list[tuple[list[int], float]]:
    """Beam search over cumulative log-probability.

    Each step expands every live hypothesis with every non-PAD/BOS token,
    keeps the best `width` continuations, and retires those ending in EOS.
    The result (up to `width` hypotheses) is sorted by log-prob descending,
    ties broken by lexical order of the token sequences.
    """
    if width < 1:
        raise ConfigError(f"beam width must be >= 1, got {width}")
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")

    live = [_Hypothesis(tokens=(), logprob=0.0, state=init_state(src, params), prev=BOS)]
    finished: list[tuple[tuple[int, ...], float]] = []

    for _ in range(max_len):
        if not live:
            break
        candidates: list[tuple[float, tuple[int, ...], DecoderState, int]] = []
        for hyp in live:
            logits, new_state = step(hyp.prev, hyp.state, src, params, mechanism)
            logp = nm.log_softmax_vec(logits)[0]
            for token in range(logits.shape[1] if isinstance(logits, np.ndarray) else logits.value.shape[1]):
                if token in (PAD, BOS):
                    continue
                candidates.append(
                    (hyp.logprob + float(logp[token]), hyp.tokens + (token,), new_state, token)
                )
        candidates.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for score, tokens, state, token in candidates[:width]:
            if token == EOS:
                finished.append((tokens, score))
            else:
                live.append(_Hypothesis(tokens=tokens, logprob=score, state=state, prev=token))

    pool = finished + [(h.tokens, h.logprob) for h in live]
    pool.sort(key=lambda c: (-c[1], c[0]))
    return [(list(tokens), score) for tokens, score in pool[:width]]


def rescore(tokens: list[int], src, params: DecoderParams, mechanism: str) -> float:
    """Sum of per-step log softmax values for an existing token sequence."""
    state = init_state(src, params)
    prev = BOS
    total = 0.0
    for token in tokens:
        logits, state = step(prev, state, src, params, mechanism)
        total += float(nm.log_softmax_vec(logits)[0, token])
        prev = token
    return total
