"""The five architecture variants: conditional-encoding attention models and
concat/max-pool baselines, each with optional adversarial domain heads.

A Model owns a flat name -> Tensor registry split into the stance path and
the adversarial path. Stance-path parameters are always created first so two
variants sharing a seed draw identical stance-path initializations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import EmbeddingMatrix, Example
from .errors import CheckpointError, ConfigError, DataError
from .layers import (
    AttentionOutput,
    AttentionParams,
    EncoderParams,
    additive_attention,
    additive_attention_batch,
    bilstm_encode,
    bilstm_encode_batch,
    conditional_encode,
    conditional_encode_batch,
    dropout_apply,
    glorot_uniform,
    grl,
    max_pool_encode,
    max_pool_encode_batch,
)
from .tensor import (
    Tensor,
    add,
    add_rowvec,
    concat,
    concat_cols,
    matmul_t,
    matvec,
    relu,
    softmax,
    softmax_rows,
)

VARIANTS = ("Concat", "ConcatInvar", "BCA", "BCAInvar", "BCAInvarSpec")
INVAR_VARIANTS = ("ConcatInvar", "BCAInvar", "BCAInvarSpec")
ATTENTION_VARIANTS = ("BCA", "BCAInvar", "BCAInvarSpec")

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    variant: str
    embed_dim: int
    hidden_dim: int
    attn_dim: int
    num_domains: int
    num_stance_classes: int = 3

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        for name in ("embed_dim", "hidden_dim", "attn_dim", "num_stance_classes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.variant in INVAR_VARIANTS and self.num_domains < 2:
            raise ConfigError(f"{self.variant} needs at least 2 source domains")
        if self.num_domains < 0:
            raise ConfigError("num_domains must be non-negative")

    @property
    def mlp_dim(self) -> int:
        return self.hidden_dim

    @property
    def repr_dim(self) -> int:
        """Width of the vector fed to the stance head."""
        if self.variant in ("BCA", "BCAInvar"):
            return 2 * self.hidden_dim
        return 4 * self.hidden_dim  # Concat pair or [s_Invar; s_Spec]

    @property
    def domain_repr_dim(self) -> int:
        """Width of the vector the adversarial heads read (via grl)."""
        return 2 * self.hidden_dim

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "attn_dim": self.attn_dim,
            "num_domains": self.num_domains,
            "num_stance_classes": self.num_stance_classes,
        }


@dataclass
class Model:
    spec: ModelSpec
    embeddings: EmbeddingMatrix
    dtype: type
    params: dict[str, Tensor]
    adversarial: set[str]
    encoder: EncoderParams | None = None
    attention: AttentionParams | None = None
    encoder_invar: EncoderParams | None = None
    attention_invar: AttentionParams | None = None
    encoder_spec: EncoderParams | None = None
    attention_spec: AttentionParams | None = None
    w_mlp: Tensor | None = None
    w_stance: Tensor | None = None
    domain_w: list[Tensor] = field(default_factory=list)
    domain_b: list[Tensor] = field(default_factory=list)

    def stance_path(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k not in self.adversarial}

    def adversarial_path(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k in self.adversarial}

    def param_count(self) -> int:
        return sum(int(np.prod(t.value.shape)) for t in self.params.values())


@dataclass
class ForwardOutput:
    """Per-example outputs, or row-batched when produced by the batch path."""

    stance_probs: Tensor
    domain_probs: list[Tensor]
    attention: AttentionOutput | None
    repr: Tensor
    sentence_mask: np.ndarray | None = None


def build_model(spec: ModelSpec, seed: int, embeddings: EmbeddingMatrix, dtype=np.float32) -> Model:
    """Initialize all parameters under one seed; stance path drawn first."""
    if embeddings.dim != spec.embed_dim:
        raise ConfigError(f"embedding dim {embeddings.dim} != spec embed_dim {spec.embed_dim}")
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    adversarial: set[str] = set()
    model = Model(spec=spec, embeddings=embeddings, dtype=dtype, params=params, adversarial=adversarial)

    def register(pairs):
        for name, t in pairs:
            if name in params:
                raise ConfigError(f"duplicate parameter name {name}")
            params[name] = t

    e, h = spec.embed_dim, spec.hidden_dim
    if spec.variant in ("Concat", "ConcatInvar", "BCA", "BCAInvar"):
        model.encoder = EncoderParams.init(e, h, rng, dtype)
        register(model.encoder.named("encoder"))
        if spec.variant in ("BCA", "BCAInvar"):
            model.attention = AttentionParams.init(spec.attn_dim, 4 * h, rng, dtype)
            register(model.attention.named("attention"))
    else:  # BCAInvarSpec: two fully separate conditional branches
        model.encoder_invar = EncoderParams.init(e, h, rng, dtype)
        register(model.encoder_invar.named("encoder_invar"))
        model.attention_invar = AttentionParams.init(spec.attn_dim, 4 * h, rng, dtype)
        register(model.attention_invar.named("attention_invar"))
        model.encoder_spec = EncoderParams.init(e, h, rng, dtype)
        register(model.encoder_spec.named("encoder_spec"))
        model.attention_spec = AttentionParams.init(spec.attn_dim, 4 * h, rng, dtype)
        register(model.attention_spec.named("attention_spec"))

    model.w_mlp = Tensor(glorot_uniform(rng, spec.mlp_dim, spec.repr_dim, dtype))
    model.w_stance = Tensor(glorot_uniform(rng, spec.num_stance_classes, spec.mlp_dim, dtype))
    register([("stance.w_mlp", model.w_mlp), ("stance.w_stance", model.w_stance)])

    if spec.variant in INVAR_VARIANTS:
        for i in range(spec.num_domains):
            w = Tensor(glorot_uniform(rng, 2, spec.domain_repr_dim, dtype))
            b = Tensor(np.zeros(2, dtype=dtype))
            model.domain_w.append(w)
            model.domain_b.append(b)
            register([(f"domain.{i}.w", w), (f"domain.{i}.b", b)])
            adversarial.update({f"domain.{i}.w", f"domain.{i}.b"})
    return model


def _check_ids(model: Model, ids: list[int], what: str) -> None:
    if not ids:
        raise ValueError(f"model_forward: empty {what}")
    n = model.embeddings.values.shape[0]
    for tid in ids:
        if not 0 <= tid < n:
            raise DataError(f"{what} token id {tid} outside embedding table of size {n}")


def _embed_sequence(model, ids, train, rate, rng):
    rows = []
    for tid in ids:
        v = Tensor(model.embeddings.values[tid].astype(model.dtype))
        rows.append(dropout_apply(v, rate, train, rng))
    return rows


def _stance_head(model: Model, s: Tensor) -> Tensor:
    return softmax(matvec(model.w_stance, relu(matvec(model.w_mlp, s))))


def _domain_heads(model: Model, adv: Tensor) -> list[Tensor]:
    z = grl(adv)
    return [
        softmax(add(matvec(w, z), b)) for w, b in zip(model.domain_w, model.domain_b)
    ]


def model_forward(
    model: Model,
    example: Example,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    dropout: float = 0.0,
) -> ForwardOutput:
    """Per-example forward pass. Dropout applies after the embedding lookup,
    between recurrent steps, and on the encoder outputs; eval mode consumes
    no randomness. For BCAInvarSpec the reported attention weights come
    from the invariant branch."""
    _check_ids(model, example.target_ids, "target")
    _check_ids(model, example.sentence_ids, "sentence")
    kw = dict(recurrent_dropout=dropout, train=train_mode, rng=rng)
    sent = _embed_sequence(model, example.sentence_ids, train_mode, dropout, rng)
    tgt = _embed_sequence(model, example.target_ids, train_mode, dropout, rng)

    def post(vecs):
        return [dropout_apply(v, dropout, train_mode, rng) for v in vecs]

    attention_out = None
    variant = model.spec.variant
    if variant in ("BCA", "BCAInvar"):
        hiddens, summary = conditional_encode(tgt, sent, model.encoder, **kw)
        hiddens = post(hiddens)
        summary = dropout_apply(summary, dropout, train_mode, rng)
        attention_out = additive_attention(summary, hiddens, model.attention)
        s = attention_out.s
        adv = s if variant == "BCAInvar" else None
    elif variant in ("Concat", "ConcatInvar"):
        t_hidden = post(bilstm_encode(tgt, model.encoder.target_fwd, model.encoder.target_bwd, **kw))
        s_hidden = post(bilstm_encode(sent, model.encoder.sent_fwd, model.encoder.sent_bwd, **kw))
        t_pool = max_pool_encode(t_hidden)
        s_pool = max_pool_encode(s_hidden)
        s = concat([t_pool, s_pool])
        adv = s_pool if variant == "ConcatInvar" else None
    else:  # BCAInvarSpec
        hi, sui = conditional_encode(tgt, sent, model.encoder_invar, **kw)
        hi = post(hi)
        sui = dropout_apply(sui, dropout, train_mode, rng)
        attention_out = additive_attention(sui, hi, model.attention_invar)
        hs, sus = conditional_encode(tgt, sent, model.encoder_spec, **kw)
        hs = post(hs)
        sus = dropout_apply(sus, dropout, train_mode, rng)
        spec_att = additive_attention(sus, hs, model.attention_spec)
        s = concat([attention_out.s, spec_att.s])
        adv = attention_out.s

    stance_probs = _stance_head(model, s)
    domain_probs = _domain_heads(model, adv) if adv is not None else []
    return ForwardOutput(stance_probs=stance_probs, domain_probs=domain_probs, attention=attention_out, repr=s)


def pad_id_batch(id_lists: list[list[int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad with PAD id 0. Returns (ids (B,T), valid (T,B), mask (B,T))."""
    batch = len(id_lists)
    width = max(len(ids) for ids in id_lists)
    out = np.zeros((batch, width), dtype=np.intp)
    mask = np.zeros((batch, width), dtype=bool)
    for i, ids in enumerate(id_lists):
        out[i, : len(ids)] = ids
        mask[i, : len(ids)] = True
    return out, mask.T.copy(), mask


def _embed_steps(model, ids, train, rate, rng):
    steps = []
    for t in range(ids.shape[1]):
        m = Tensor(model.embeddings.values[ids[:, t]].astype(model.dtype))
        steps.append(dropout_apply(m, rate, train, rng))
    return steps


def _stance_head_batch(model: Model, s: Tensor) -> Tensor:
    return softmax_rows(matmul_t(relu(matmul_t(s, model.w_mlp)), model.w_stance))


def _domain_heads_batch(model: Model, adv: Tensor) -> list[Tensor]:
    z = grl(adv)
    return [
        softmax_rows(add_rowvec(matmul_t(z, w), b))
        for w, b in zip(model.domain_w, model.domain_b)
    ]


def model_forward_batch(
    model: Model,
    examples: list[Example],
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    dropout: float = 0.0,
) -> ForwardOutput:
    """Row-batched forward pass over padded sequences; equivalent in eval
    mode to stacking per-example forward outputs."""
    if not examples:
        raise ValueError("model_forward_batch: empty batch")
    for ex in examples:
        _check_ids(model, ex.target_ids, "target")
        _check_ids(model, ex.sentence_ids, "sentence")
    t_ids, t_valid, _ = pad_id_batch([ex.target_ids for ex in examples])
    s_ids, s_valid, s_mask = pad_id_batch([ex.sentence_ids for ex in examples])
    kw = dict(recurrent_dropout=dropout, train=train_mode, rng=rng)
    sent = _embed_steps(model, s_ids, train_mode, dropout, rng)
    tgt = _embed_steps(model, t_ids, train_mode, dropout, rng)

    def post(mats):
        return [dropout_apply(m, dropout, train_mode, rng) for m in mats]

    attention_out = None
    variant = model.spec.variant
    if variant in ("BCA", "BCAInvar"):
        hiddens, summary = conditional_encode_batch(tgt, t_valid, sent, s_valid, model.encoder, **kw)
        hiddens = post(hiddens)
        summary = dropout_apply(summary, dropout, train_mode, rng)
        attention_out = additive_attention_batch(summary, hiddens, model.attention, s_mask)
        s = attention_out.s
        adv = s if variant == "BCAInvar" else None
    elif variant in ("Concat", "ConcatInvar"):
        t_hidden = post(
            bilstm_encode_batch(tgt, t_valid, model.encoder.target_fwd, model.encoder.target_bwd, **kw)
        )
        s_hidden = post(
            bilstm_encode_batch(sent, s_valid, model.encoder.sent_fwd, model.encoder.sent_bwd, **kw)
        )
        t_pool = max_pool_encode_batch(t_hidden, t_valid.T)
        s_pool = max_pool_encode_batch(s_hidden, s_mask)
        s = concat_cols([t_pool, s_pool])
        adv = s_pool if variant == "ConcatInvar" else None
    else:  # BCAInvarSpec
        hi, sui = conditional_encode_batch(tgt, t_valid, sent, s_valid, model.encoder_invar, **kw)
        hi = post(hi)
        sui = dropout_apply(sui, dropout, train_mode, rng)
        attention_out = additive_attention_batch(sui, hi, model.attention_invar, s_mask)
        hs, sus = conditional_encode_batch(tgt, t_valid, sent, s_valid, model.encoder_spec, **kw)
        hs = post(hs)
        sus = dropout_apply(sus, dropout, train_mode, rng)
        spec_att = additive_attention_batch(sus, hs, model.attention_spec, s_mask)
        s = concat_cols([attention_out.s, spec_att.s])
        adv = attention_out.s

    stance_probs = _stance_head_batch(model, s)
    domain_probs = _domain_heads_batch(model, adv) if adv is not None else []
    return ForwardOutput(
        stance_probs=stance_probs,
        domain_probs=domain_probs,
        attention=attention_out,
        repr=s,
        sentence_mask=s_mask,
    )


def save_checkpoint(model: Model, path, vocab_hash: str) -> None:
    """Write all registry parameters plus spec and dataset hashes to one npz."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "vocab_hash": vocab_hash,
        "embed_hash": model.embeddings.content_hash(),
        "precision": np.dtype(model.dtype).name,
        "adversarial": sorted(model.adversarial),
    }
    arrays = {name: t.value for name, t in model.params.items()}
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(
    path,
    embeddings: EmbeddingMatrix,
    expected_vocab_hash: str | None = None,
    check_embeddings: bool = True,
) -> tuple[Model, dict]:
    """Rebuild a Model with value-exact parameters; returns (model, meta)."""
    try:
        with np.load(path, allow_pickle=False) as archive:
            names = set(archive.files)
            if "__meta__" not in names:
                raise CheckpointError(f"{path}: not a model checkpoint (missing metadata)")
            meta = json.loads(str(archive["__meta__"]))
            arrays = {name: archive[name] for name in names if name != "__meta__"}
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    if expected_vocab_hash is not None and meta["vocab_hash"] != expected_vocab_hash:
        raise CheckpointError(
            f"{path}: vocabulary hash mismatch (checkpoint {meta['vocab_hash'][:12]}..., "
            f"current {expected_vocab_hash[:12]}...)"
        )
    if check_embeddings and meta["embed_hash"] != embeddings.content_hash():
        raise CheckpointError(f"{path}: embedding matrix differs from the one used at training time")
    spec = ModelSpec(**meta["spec"])
    model = build_model(spec, seed=0, embeddings=embeddings, dtype=np.dtype(meta["precision"]).type)
    saved = set(arrays)
    expected = set(model.params)
    if saved != expected:
        missing = sorted(expected - saved)
        extra = sorted(saved - expected)
        raise CheckpointError(f"{path}: parameter set mismatch (missing {missing}, extra {extra})")
    # the registry and the structured layer views hold the same Tensor
    # objects, so assigning values here updates both
    for name, t in model.params.items():
        arr = arrays[name]
        if arr.shape != t.value.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}: {arr.shape} vs {t.value.shape}")
        t.value = arr
    return model, meta
