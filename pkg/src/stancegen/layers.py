"""Neural building blocks: LSTMs, conditional encoders, attention, pooling,
dropout, and the gradient-reversal layer.

Each layer comes in two flavors sharing the same parameters: a per-example
version operating on vectors, and a row-batched version operating on
(batch, dim) matrices with trailing padding controlled by validity masks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import ShapeError
from .tensor import (
    Tensor,
    _record,
    add,
    add_rowvec,
    blend_rows,
    column,
    concat,
    concat_cols,
    dot,
    dropout,
    fill_rows,
    matmul_t,
    matvec,
    maximum,
    mul,
    scale_rows_t,
    sigmoid,
    softmax,
    softmax_rows,
    stack_cols,
    tanh,
    tensor,
    weighted_sum,
)


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int, dtype) -> np.ndarray:
    r = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-r, r, size=(rows, cols)).astype(dtype)


@dataclass
class LSTMState:
    """Hidden and cell vectors; rank-1 per example or (batch, hidden) batched."""

    h: Tensor
    c: Tensor


@dataclass
class LSTMParams:
    """Input/forget/output/candidate gate weights over [x; h_prev], plus biases."""

    w_i: Tensor
    w_f: Tensor
    w_o: Tensor
    w_g: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_g: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.w_i.value.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_i.value.shape[1] - self.hidden_dim

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator, dtype) -> "LSTMParams":
        """Glorot-uniform gate weights; zero biases except forget bias = 1."""

        def w() -> Tensor:
            return Tensor(glorot_uniform(rng, hidden_dim, input_dim + hidden_dim, dtype))

        def b(fill: float = 0.0) -> Tensor:
            return Tensor(np.full(hidden_dim, fill, dtype=dtype))

        return cls(w_i=w(), w_f=w(), w_o=w(), w_g=w(), b_i=b(), b_f=b(1.0), b_o=b(), b_g=b())

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for field in ("w_i", "w_f", "w_o", "w_g", "b_i", "b_f", "b_o", "b_g"):
            yield f"{prefix}.{field}", getattr(self, field)


@dataclass
class AttentionParams:
    """Additive attention: score_i = v . tanh(w @ [query; key_i]), no bias."""

    w: Tensor
    v: Tensor

    @classmethod
    def init(cls, attn_dim: int, in_dim: int, rng: np.random.Generator, dtype) -> "AttentionParams":
        w = Tensor(glorot_uniform(rng, attn_dim, in_dim, dtype))
        r = np.sqrt(6.0 / (attn_dim + 1))
        v = Tensor(rng.uniform(-r, r, size=attn_dim).astype(dtype))
        return cls(w=w, v=v)

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w", self.w
        yield f"{prefix}.v", self.v


@dataclass
class AttentionOutput:
    s: Tensor
    alpha: Tensor


def zero_state(hidden_dim: int, dtype=None) -> LSTMState:
    return LSTMState(tensor(np.zeros(hidden_dim), dtype), tensor(np.zeros(hidden_dim), dtype))


def zero_state_batch(batch: int, hidden_dim: int, dtype=None) -> LSTMState:
    shape = (batch, hidden_dim)
    return LSTMState(tensor(np.zeros(shape), dtype), tensor(np.zeros(shape), dtype))


def lstm_step(x: Tensor, prev: LSTMState, params: LSTMParams) -> LSTMState:
    """One LSTM step: i,f,o = sigmoid gates, g = tanh candidate."""
    if x.value.shape != (params.input_dim,):
        raise ShapeError(f"lstm_step: input {x.value.shape}, expected ({params.input_dim},)")
    if prev.h.value.shape != (params.hidden_dim,):
        raise ShapeError(f"lstm_step: state {prev.h.value.shape}, expected ({params.hidden_dim},)")
    z = concat([x, prev.h])
    i = sigmoid(add(matvec(params.w_i, z), params.b_i))
    f = sigmoid(add(matvec(params.w_f, z), params.b_f))
    o = sigmoid(add(matvec(params.w_o, z), params.b_o))
    g = tanh(add(matvec(params.w_g, z), params.b_g))
    c = add(mul(f, prev.c), mul(i, g))
    h = mul(o, tanh(c))
    return LSTMState(h, c)


def lstm_step_batch(x: Tensor, prev: LSTMState, params: LSTMParams) -> LSTMState:
    """Batched LSTM step over (batch, dim) rows."""
    z = concat_cols([x, prev.h])
    i = sigmoid(add_rowvec(matmul_t(z, params.w_i), params.b_i))
    f = sigmoid(add_rowvec(matmul_t(z, params.w_f), params.b_f))
    o = sigmoid(add_rowvec(matmul_t(z, params.w_o), params.b_o))
    g = tanh(add_rowvec(matmul_t(z, params.w_g), params.b_g))
    c = add(mul(f, prev.c), mul(i, g))
    h = mul(o, tanh(c))
    return LSTMState(h, c)


def _steps_in_order(n: int, reverse: bool) -> range:
    return range(n - 1, -1, -1) if reverse else range(n)


def run_lstm(
    seq: Sequence[Tensor],
    init: LSTMState,
    params: LSTMParams,
    reverse: bool = False,
    recurrent_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> list[LSTMState]:
    """Run an LSTM over a sequence; states returned in position order.

    The state at the first-processed position (last position when reverse)
    conditions on `init`. Recurrent dropout draws an independent mask on
    h_prev entering each step.
    """
    if not seq:
        raise ValueError("run_lstm: empty sequence")
    states: list[LSTMState | None] = [None] * len(seq)
    prev = init
    for t in _steps_in_order(len(seq), reverse):
        step_in = prev
        if train and recurrent_dropout > 0.0:
            step_in = LSTMState(dropout(prev.h, recurrent_dropout, rng), prev.c)
        prev = lstm_step(seq[t], step_in, params)
        states[t] = prev
    return states  # type: ignore[return-value]


def run_lstm_batch(
    steps: Sequence[Tensor],
    valid: np.ndarray,
    init: LSTMState,
    params: LSTMParams,
    reverse: bool = False,
    recurrent_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> list[LSTMState]:
    """Batched run over padded steps; valid is (time, batch) with trailing padding.

    At padded positions the state carries through unchanged, so the state at
    the last processed step equals each row's true final state.
    """
    if not len(steps):
        raise ValueError("run_lstm_batch: empty sequence")
    states: list[LSTMState | None] = [None] * len(steps)
    prev = init
    for t in _steps_in_order(len(steps), reverse):
        step_in = prev
        if train and recurrent_dropout > 0.0:
            step_in = LSTMState(dropout(prev.h, recurrent_dropout, rng), prev.c)
        new = lstm_step_batch(steps[t], step_in, params)
        keep = valid[t]
        if keep.all():
            prev = new
        else:
            prev = LSTMState(blend_rows(new.h, prev.h, keep), blend_rows(new.c, prev.c, keep))
        states[t] = prev
    return states  # type: ignore[return-value]


@dataclass
class EncoderParams:
    """One BiLSTM pair for targets and one for sentences."""

    target_fwd: LSTMParams
    target_bwd: LSTMParams
    sent_fwd: LSTMParams
    sent_bwd: LSTMParams

    @classmethod
    def init(cls, embed_dim: int, hidden_dim: int, rng: np.random.Generator, dtype) -> "EncoderParams":
        return cls(
            target_fwd=LSTMParams.init(embed_dim, hidden_dim, rng, dtype),
            target_bwd=LSTMParams.init(embed_dim, hidden_dim, rng, dtype),
            sent_fwd=LSTMParams.init(embed_dim, hidden_dim, rng, dtype),
            sent_bwd=LSTMParams.init(embed_dim, hidden_dim, rng, dtype),
        )

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for part in ("target_fwd", "target_bwd", "sent_fwd", "sent_bwd"):
            yield from getattr(self, part).named(f"{prefix}.{part}")


def conditional_encode(
    target: Sequence[Tensor],
    sentence: Sequence[Tensor],
    params: EncoderParams,
    recurrent_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[list[Tensor], Tensor]:
    """Encode a sentence conditioned on its target.

    The forward sentence LSTM starts from the forward target LSTM's final
    state and the backward sentence LSTM from the backward target LSTM's
    state at position 0. Returns per-position [h_fwd; h_bwd] vectors and the
    target summary [h_fwd_last; h_bwd_first].
    """
    if not target or not sentence:
        raise ValueError("conditional_encode: empty target or sentence")
    hd = params.target_fwd.hidden_dim
    kw = dict(recurrent_dropout=recurrent_dropout, train=train, rng=rng)
    t_fwd = run_lstm(target, zero_state(hd), params.target_fwd, **kw)
    t_bwd = run_lstm(target, zero_state(hd), params.target_bwd, reverse=True, **kw)
    s_fwd = run_lstm(sentence, t_fwd[-1], params.sent_fwd, **kw)
    s_bwd = run_lstm(sentence, t_bwd[0], params.sent_bwd, reverse=True, **kw)
    hiddens = [concat([f.h, b.h]) for f, b in zip(s_fwd, s_bwd)]
    summary = concat([t_fwd[-1].h, t_bwd[0].h])
    return hiddens, summary


def conditional_encode_batch(
    target_steps: Sequence[Tensor],
    target_valid: np.ndarray,
    sent_steps: Sequence[Tensor],
    sent_valid: np.ndarray,
    params: EncoderParams,
    recurrent_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[list[Tensor], Tensor]:
    batch = target_steps[0].value.shape[0]
    hd = params.target_fwd.hidden_dim
    kw = dict(recurrent_dropout=recurrent_dropout, train=train, rng=rng)
    t_fwd = run_lstm_batch(target_steps, target_valid, zero_state_batch(batch, hd), params.target_fwd, **kw)
    t_bwd = run_lstm_batch(
        target_steps, target_valid, zero_state_batch(batch, hd), params.target_bwd, reverse=True, **kw
    )
    s_fwd = run_lstm_batch(sent_steps, sent_valid, t_fwd[-1], params.sent_fwd, **kw)
    s_bwd = run_lstm_batch(sent_steps, sent_valid, t_bwd[0], params.sent_bwd, reverse=True, **kw)
    hiddens = [concat_cols([f.h, b.h]) for f, b in zip(s_fwd, s_bwd)]
    summary = concat_cols([t_fwd[-1].h, t_bwd[0].h])
    return hiddens, summary


def bilstm_encode(
    seq: Sequence[Tensor],
    fwd: LSTMParams,
    bwd: LSTMParams,
    recurrent_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> list[Tensor]:
    """Unconditional BiLSTM encoding from zero initial states."""
    hd = fwd.hidden_dim
    kw = dict(recurrent_dropout=recurrent_dropout, train=train, rng=rng)
    f = run_lstm(seq, zero_state(hd), fwd, **kw)
    b = run_lstm(seq, zero_state(hd), bwd, reverse=True, **kw)
    return [concat([fj.h, bj.h]) for fj, bj in zip(f, b)]


def bilstm_encode_batch(
    steps: Sequence[Tensor],
    valid: np.ndarray,
    fwd: LSTMParams,
    bwd: LSTMParams,
    recurrent_dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> list[Tensor]:
    batch = steps[0].value.shape[0]
    hd = fwd.hidden_dim
    kw = dict(recurrent_dropout=recurrent_dropout, train=train, rng=rng)
    f = run_lstm_batch(steps, valid, zero_state_batch(batch, hd), fwd, **kw)
    b = run_lstm_batch(steps, valid, zero_state_batch(batch, hd), bwd, reverse=True, **kw)
    return [concat_cols([fj.h, bj.h]) for fj, bj in zip(f, b)]


def additive_attention(
    target_summary: Tensor,
    hiddens: Sequence[Tensor],
    params: AttentionParams,
    mask: np.ndarray | None = None,
) -> AttentionOutput:
    """Score positions with v . tanh(w [summary; h_i]), softmax, weighted sum."""
    if mask is None:
        mask = np.ones(len(hiddens), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("additive_attention: all positions masked")
    scores = [dot(params.v, tanh(matvec(params.w, concat([target_summary, h])))) for h in hiddens]
    alpha = softmax(concat(scores), mask=mask)
    s = weighted_sum(alpha, hiddens)
    return AttentionOutput(s=s, alpha=alpha)


def additive_attention_batch(
    target_summary: Tensor,
    hiddens: Sequence[Tensor],
    params: AttentionParams,
    mask: np.ndarray,
) -> AttentionOutput:
    """Batched attention; mask is (batch, positions) with trailing padding."""
    scores = [
        matvec(tanh(matmul_t(concat_cols([target_summary, h]), params.w)), params.v) for h in hiddens
    ]
    alpha = softmax_rows(stack_cols(scores), mask=mask)
    s = scale_rows_t(hiddens[0], column(alpha, 0))
    for j in range(1, len(hiddens)):
        s = add(s, scale_rows_t(hiddens[j], column(alpha, j)))
    return AttentionOutput(s=s, alpha=alpha)


def max_pool_encode(hiddens: Sequence[Tensor], mask: np.ndarray | None = None) -> Tensor:
    """Coordinatewise max over unmasked positions; ties favor the earliest."""
    if mask is None:
        mask = np.ones(len(hiddens), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    picked = [h for h, m in zip(hiddens, mask) if m]
    if not picked:
        raise ValueError("max_pool_encode: all positions masked")
    out = picked[0]
    for h in picked[1:]:
        out = maximum(out, h)
    return out


def max_pool_encode_batch(hiddens: Sequence[Tensor], valid: np.ndarray) -> Tensor:
    """Batched max pooling; requires position 0 valid for every row."""
    if not valid[:, 0].all():
        raise ValueError("max_pool_encode_batch: padding must be trailing")
    out = hiddens[0]
    for j in range(1, len(hiddens)):
        keep = valid[:, j]
        cand = hiddens[j] if keep.all() else fill_rows(hiddens[j], keep, -np.inf)
        out = maximum(out, cand)
    return out


def grl(x: Tensor) -> Tensor:
    """Gradient reversal: identity forward, exact negation backward."""
    out = Tensor(x.value.copy())

    def backward(g):
        x.accum(-g)

    return _record(out, (x,), backward)


def dropout_apply(
    x: Tensor, rate: float, train_mode: bool, rng: np.random.Generator | None = None
) -> Tensor:
    """Inverted dropout in train mode, identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train_mode or rate == 0.0:
        return x
    return dropout(x, rate, rng)
