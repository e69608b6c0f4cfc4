"""Losses, Adam with L2, gradient clipping, early stopping, and the
mini-batch adversarial training loop.

The optimized objective is stance_loss + lambda * domain_loss with gradient
reversal on the adversarial path, so shared encoder parameters descend the
stance loss while ascending the domain loss, and domain heads descend their
own loss. The stance - lambda * domain scalar is computed for logging only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import STANCE_TO_INDEX, STANCES, Corpus
from .errors import ConfigError
from .evaluation import compute_metrics
from .models import Model, model_forward_batch, save_checkpoint
from .tensor import (
    Tape,
    Tensor,
    add,
    clamp_min,
    log,
    negate,
    scale,
    select_rows,
    slice1d,
    sum_all,
    zero_grads,
)

PROB_FLOOR = 1e-12


@dataclass
class Hyperparams:
    embed_dim: int = 100
    hidden_dim: int = 200
    attn_dim: int | None = None  # defaults to 2 * hidden_dim
    dropout: float = 0.1
    batch_size: int = 32
    learning_rate: float = 0.003
    l2: float = 0.01
    patience: int = 10
    lam: float = 0.1
    max_epochs: int = 200
    seed: int = 0
    min_count: int = 1
    clip_norm: float = 5.0

    def __post_init__(self):
        for name in ("embed_dim", "hidden_dim", "batch_size", "patience", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("learning_rate", "clip_norm"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative")

    @property
    def attention_dim(self) -> int:
        return self.attn_dim if self.attn_dim is not None else 2 * self.hidden_dim


def stance_loss(probs: Tensor, gold: str | int) -> Tensor:
    """Cross-entropy -log p[gold] with a 1e-12 probability floor."""
    idx = STANCE_TO_INDEX[gold] if isinstance(gold, str) else gold
    return negate(log(clamp_min(slice1d(probs, idx, idx + 1), PROB_FLOOR)))


def domain_loss(domain_probs: list[Tensor], gold_domain: int) -> Tensor:
    """Mean over domains of binary cross-entropy against "belongs to i"."""
    if not 0 <= gold_domain < len(domain_probs):
        raise ValueError(f"gold_domain {gold_domain} out of range for {len(domain_probs)} domains")
    total = None
    for i, p in enumerate(domain_probs):
        cls = 0 if i == gold_domain else 1  # class 0 = "belongs to domain i"
        term = negate(log(clamp_min(slice1d(p, cls, cls + 1), PROB_FLOOR)))
        total = term if total is None else add(total, term)
    return scale(total, 1.0 / len(domain_probs))


def stance_loss_batch(probs: Tensor, gold_idx: np.ndarray) -> Tensor:
    """Mean stance cross-entropy over a batch; probs is (batch, 3)."""
    picked = select_rows(probs, gold_idx)
    return scale(sum_all(negate(log(clamp_min(picked, PROB_FLOOR)))), 1.0 / probs.value.shape[0])


def domain_loss_batch(domain_probs: list[Tensor], gold_domain: np.ndarray) -> Tensor:
    """Mean over batch and domains of the per-head binary cross-entropies."""
    batch = domain_probs[0].value.shape[0]
    total = None
    for i, p in enumerate(domain_probs):
        cls = np.where(gold_domain == i, 0, 1)
        term = sum_all(negate(log(clamp_min(select_rows(p, cls), PROB_FLOOR))))
        total = term if total is None else add(total, term)
    return scale(total, 1.0 / (len(domain_probs) * batch))


def total_loss(stance: float, domain: float, lam: float) -> float:
    """The reported combination stance - lambda * domain (not optimized)."""
    return stance - lam * domain


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.value) for k, p in params.items()},
            v={k: np.zeros_like(p.value) for k, p in params.items()},
        )


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float, l2: float) -> None:
    """One Adam update with L2 added to the raw gradient before the moments."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.value)
        if l2:
            g = g + l2 * p.value
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return norm


class EarlyStopper:
    """Track the best dev score; stop after `patience` non-improving epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_score = -np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, score: float) -> bool:
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


@dataclass
class EpochLog:
    epoch: int
    train_stance: float
    train_domain: float
    dev_f1: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.train_stance:.6f}\t{self.train_domain:.6f}\t{self.dev_f1:.6f}"


@dataclass
class TrainReport:
    epochs: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    stop_epoch: int = 0
    best_dev_f1: float = 0.0
    wall_time: float = 0.0

    def log_text(self) -> str:
        return "".join(e.line() + "\n" for e in self.epochs)


def predict_corpus(model: Model, corpus: Corpus, batch_size: int = 32) -> list[str]:
    """Argmax stance labels in corpus order (eval mode, no tape)."""
    labels: list[str] = []
    examples = corpus.examples
    for lo in range(0, len(examples), batch_size):
        out = model_forward_batch(model, examples[lo : lo + batch_size])
        for row in np.argmax(out.stance_probs.value, axis=1):
            labels.append(STANCES[row])
    return labels


def dev_macro_f1(model: Model, dev: Corpus, batch_size: int = 32) -> float:
    preds = predict_corpus(model, dev, batch_size)
    return compute_metrics(preds, [ex.stance for ex in dev]).macro_f1


def _precision_of(dtype) -> str:
    return np.dtype(dtype).name


def train(
    model: Model,
    train_corpus: Corpus,
    dev_corpus: Corpus,
    hp: Hyperparams,
    log_path=None,
    checkpoint_path=None,
    vocab_hash: str = "",
) -> TrainReport:
    """Mini-batch training with per-epoch dev selection and early stopping.

    The model is left holding the best-epoch parameters; if checkpoint_path
    is given they are also saved there.
    """
    adversarial = model.spec.variant in ("ConcatInvar", "BCAInvar", "BCAInvarSpec")
    if adversarial:
        missing = [i for i, ex in enumerate(train_corpus) if ex.domain_index is None]
        if missing:
            raise ConfigError(
                f"{model.spec.variant} requires domain labels on all training examples; "
                f"{len(missing)} examples have none"
            )
    examples = list(train_corpus.examples)
    if not examples:
        raise ConfigError("empty training corpus")
    shuffle_rng = np.random.default_rng([hp.seed, 0])
    dropout_rng = np.random.default_rng([hp.seed, 1])
    params = model.params
    adam = AdamState.init(params)
    stopper = EarlyStopper(hp.patience)
    report = TrainReport()
    precision = _precision_of(model.dtype)
    best_values: dict[str, np.ndarray] = {k: p.value.copy() for k, p in params.items()}
    started = time.perf_counter()

    for epoch in range(1, hp.max_epochs + 1):
        order = shuffle_rng.permutation(len(examples))
        stance_total = 0.0
        domain_total = 0.0
        for lo in range(0, len(order), hp.batch_size):
            batch = [examples[i] for i in order[lo : lo + hp.batch_size]]
            with Tape(precision) as tape:
                out = model_forward_batch(
                    model, batch, train_mode=True, rng=dropout_rng, dropout=hp.dropout
                )
                gold = np.array([STANCE_TO_INDEX[ex.stance] for ex in batch])
                s_loss = stance_loss_batch(out.stance_probs, gold)
                if adversarial:
                    domains = np.array([ex.domain_index for ex in batch])
                    d_loss = domain_loss_batch(out.domain_probs, domains)
                    objective = add(s_loss, scale(d_loss, hp.lam))
                    domain_total += float(d_loss.value[0]) * len(batch)
                else:
                    objective = s_loss
                tape.backward(objective)
            stance_total += float(s_loss.value[0]) * len(batch)
            clip_gradients(params, hp.clip_norm)
            adam_step(params, adam, hp.learning_rate, hp.l2)
            zero_grads(params.values())
        f1 = dev_macro_f1(model, dev_corpus, hp.batch_size)
        report.epochs.append(
            EpochLog(
                epoch=epoch,
                train_stance=stance_total / len(examples),
                train_domain=domain_total / len(examples),
                dev_f1=f1,
            )
        )
        improved = f1 > stopper.best_score
        should_stop = stopper.update(epoch, f1)
        if improved:
            best_values = {k: p.value.copy() for k, p in params.items()}
        if should_stop:
            break

    report.stop_epoch = report.epochs[-1].epoch
    report.best_epoch = stopper.best_epoch
    report.best_dev_f1 = float(stopper.best_score)
    report.wall_time = time.perf_counter() - started
    for k, p in params.items():
        p.value = best_values[k]
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write(report.log_text())
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, vocab_hash)
    return report
