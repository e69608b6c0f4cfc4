"""Command-line entry point: train, eval, predict, dump-attention, gradcheck.

Configuration is a flat key=value text file; a handful of flags override
file values. Exit codes partition failures: 2 config, 3 data, 4 checkpoint,
5 capability, 1 diagnostic.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    Corpus,
    EmbeddingMatrix,
    Example,
    Split,
    STANCES,
    Vocabulary,
    build_vocab,
    encode_corpus,
    load_embeddings,
    make_split,
    parse_semeval_tsv,
    random_embeddings,
    tokenize,
)
from .errors import (
    CapabilityError,
    CheckpointError,
    ConfigError,
    DataError,
    ParseError,
)
from .evaluation import compute_metrics, dump_attention, format_metrics
from .layers import (
    AttentionParams,
    EncoderParams,
    LSTMParams,
    additive_attention,
    conditional_encode,
    lstm_step,
    max_pool_encode,
    run_lstm,
    zero_state,
)
from .models import ModelSpec, build_model, load_checkpoint, model_forward, model_forward_batch
from .tensor import (
    Tape,
    Tensor,
    add,
    apply_binary,
    apply_unary,
    dot,
    finite_difference_check,
    matmul_t,
    matvec,
    scale,
    softmax,
    sum_all,
    weighted_sum,
    zero_grads,
)
from .training import (
    Hyperparams,
    domain_loss_batch,
    predict_corpus,
    stance_loss_batch,
    train,
)

EXIT_OK = 0
EXIT_DIAGNOSTIC = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CHECKPOINT = 4
EXIT_CAPABILITY = 5

GRADCHECK_TOLERANCE = 1e-4
DATA_DIR_ENV = "STANCEGEN_DATA_DIR"


# ------------------------------------------------------------ configuration


@dataclass
class RunConfig:
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    embeddings_path: str | None = None
    vocab_path: str | None = None
    out_dir: str = "runs"
    variant: str = "BCAInvar"
    seeds: list[int] = field(default_factory=lambda: [0])
    count_check: bool = True
    parallel_seeds: bool = False
    hp: Hyperparams = field(default_factory=Hyperparams)


_HP_KEYS = {
    "embed_dim": int,
    "hidden_dim": int,
    "attn_dim": int,
    "dropout": float,
    "batch_size": int,
    "learning_rate": float,
    "l2": float,
    "patience": int,
    "lambda": float,
    "max_epochs": int,
    "min_count": int,
}
_PATH_KEYS = ("train_path", "dev_path", "test_path", "embeddings_path", "vocab_path", "out_dir")
_BOOL_KEYS = ("count_check", "parallel_seeds")


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {raw!r}")


def parse_config_file(path) -> dict[str, str]:
    """Read flat key=value lines; # starts a comment, blank lines skipped."""
    if not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def _parse_seeds(raw: str) -> list[int]:
    try:
        seeds = [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"seeds must be comma-separated integers, got {raw!r}")
    if not seeds:
        raise ConfigError("at least one seed is required")
    return seeds


def build_run_config(args) -> RunConfig:
    """Merge defaults, then the config file, then flag overrides."""
    values: dict[str, str] = {}
    if getattr(args, "config", None):
        values = parse_config_file(args.config)
    cfg = RunConfig()
    hp_kwargs: dict = {}
    for key, raw in values.items():
        if key in _HP_KEYS:
            try:
                parsed = _HP_KEYS[key](raw)
            except ValueError:
                raise ConfigError(f"{key} must be {_HP_KEYS[key].__name__}, got {raw!r}")
            hp_kwargs["lam" if key == "lambda" else key] = parsed
        elif key in _PATH_KEYS:
            setattr(cfg, key, raw)
        elif key in _BOOL_KEYS:
            setattr(cfg, key, _parse_bool(key, raw))
        elif key == "variant":
            cfg.variant = raw
        elif key == "seeds" or key == "seed":
            cfg.seeds = _parse_seeds(raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if getattr(args, "variant", None):
        cfg.variant = args.variant
    if getattr(args, "lam", None) is not None:
        hp_kwargs["lam"] = args.lam
    if getattr(args, "seeds", None):
        cfg.seeds = _parse_seeds(args.seeds)
    elif getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "no_count_check", False):
        cfg.count_check = False
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    if getattr(args, "parallel_seeds", False):
        cfg.parallel_seeds = True
    try:
        cfg.hp = Hyperparams(**hp_kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc))
    return cfg


def _resolve_data_path(configured: str | None, default_name: str, label: str) -> Path:
    """Resolve against the filesystem, then $STANCEGEN_DATA_DIR."""
    env_dir = os.environ.get(DATA_DIR_ENV)
    if configured:
        direct = Path(configured)
        if direct.exists():
            return direct
        if env_dir and not direct.is_absolute():
            fallback = Path(env_dir) / configured
            if fallback.exists():
                return fallback
        raise ConfigError(f"{label} path not found: {configured}")
    if env_dir:
        candidate = Path(env_dir) / default_name
        if candidate.exists():
            return candidate
    raise ConfigError(f"no {label} path configured and ${DATA_DIR_ENV} has no {default_name}")


def load_datasets(cfg: RunConfig) -> Split:
    """Parse the three distribution files, pool them, re-split by target."""
    full = Corpus([])
    for key, default_name, label in (
        ("train_path", "train.tsv", "train"),
        ("dev_path", "dev.tsv", "dev"),
        ("test_path", "test.tsv", "test"),
    ):
        path = _resolve_data_path(getattr(cfg, key), default_name, label)
        full.examples.extend(parse_semeval_tsv(path).examples)
    return make_split(full, check_counts=cfg.count_check)


def load_vocab_and_embeddings(cfg: RunConfig, split: Split | None):
    """Vocabulary from file if configured/saved, else rebuilt from train."""
    vocab = None
    if cfg.vocab_path:
        vocab = Vocabulary.load(_resolve_data_path(cfg.vocab_path, "vocab.tsv", "vocab"))
    else:
        saved = Path(cfg.out_dir) / "vocab.tsv"
        if saved.exists():
            vocab = Vocabulary.load(saved)
    if vocab is None:
        if split is None:
            raise ConfigError("no vocabulary file available and no training data to rebuild it")
        vocab = build_vocab([split.train], min_count=cfg.hp.min_count)
    if cfg.embeddings_path:
        path = _resolve_data_path(cfg.embeddings_path, "embeddings.txt", "embeddings")
        emb = load_embeddings(path, vocab, cfg.hp.embed_dim)
    else:
        emb = random_embeddings(vocab, cfg.hp.embed_dim)
    return vocab, emb


def _model_spec(cfg: RunConfig, num_domains: int) -> ModelSpec:
    return ModelSpec(
        variant=cfg.variant,
        embed_dim=cfg.hp.embed_dim,
        hidden_dim=cfg.hp.hidden_dim,
        attn_dim=cfg.hp.attention_dim,
        num_domains=num_domains,
    )


# ------------------------------------------------------------------- train


def _train_one_seed(cfg: RunConfig, split: Split, vocab, emb, seed: int):
    out_dir = Path(cfg.out_dir)
    spec = _model_spec(cfg, len(split.domain_names))
    model = build_model(spec, seed, emb)
    hp = dataclasses.replace(cfg.hp, seed=seed)
    report = train(
        model,
        split.train,
        split.dev,
        hp,
        log_path=out_dir / f"train_seed{seed}.log",
        checkpoint_path=out_dir / f"model_seed{seed}.npz",
        vocab_hash=vocab.content_hash(),
    )
    dev_metrics = compute_metrics(
        predict_corpus(model, split.dev, hp.batch_size), [ex.stance for ex in split.dev]
    )
    test_metrics = compute_metrics(
        predict_corpus(model, split.test, hp.batch_size), [ex.stance for ex in split.test]
    )
    metrics_text = format_metrics(dev_metrics, title=f"dev (seed {seed})") + format_metrics(
        test_metrics, title=f"test (seed {seed})"
    )
    (out_dir / f"metrics_seed{seed}.txt").write_text(metrics_text, encoding="utf-8")
    return seed, report, dev_metrics.macro_f1, test_metrics.macro_f1


def _train_seed_worker(cfg: RunConfig, seed: int):
    """Self-contained per-seed run for the parallel path."""
    split = load_datasets(cfg)
    vocab, emb = load_vocab_and_embeddings(cfg, split)
    for corpus in (split.train, split.dev, split.test):
        encode_corpus(corpus, vocab)
    seed, report, dev_f1, test_f1 = _train_one_seed(cfg, split, vocab, emb, seed)
    return seed, report.best_epoch, dev_f1, test_f1


def cmd_train(args) -> int:
    cfg = build_run_config(args)
    split = load_datasets(cfg)
    vocab, emb = load_vocab_and_embeddings(cfg, split)
    for corpus in (split.train, split.dev, split.test):
        encode_corpus(corpus, vocab)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(out_dir / "vocab.tsv")
    if not cfg.embeddings_path:
        print("no embeddings path configured; using hash-seeded random vectors")
    rows = []
    if cfg.parallel_seeds and len(cfg.seeds) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=len(cfg.seeds)) as pool:
            futures = [pool.submit(_train_seed_worker, cfg, seed) for seed in cfg.seeds]
            for fut in futures:
                seed, best_epoch, dev_f1, test_f1 = fut.result()
                rows.append((seed, best_epoch, dev_f1, test_f1))
    else:
        for seed in cfg.seeds:
            seed, report, dev_f1, test_f1 = _train_one_seed(cfg, split, vocab, emb, seed)
            rows.append((seed, report.best_epoch, dev_f1, test_f1))
    lines = []
    for seed, best_epoch, dev_f1, test_f1 in rows:
        lines.append(
            f"seed {seed}: best epoch {best_epoch}, dev macro-F1 {dev_f1:.4f}, "
            f"test macro-F1 {test_f1:.4f}"
        )
    if len(rows) > 1:
        med_dev = statistics.median(r[2] for r in rows)
        med_test = statistics.median(r[3] for r in rows)
        lines.append(
            f"median over {len(rows)} seeds: dev macro-F1 {med_dev:.4f}, "
            f"test macro-F1 {med_test:.4f}"
        )
    summary = "\n".join(lines) + "\n"
    print(summary, end="")
    (out_dir / "summary.txt").write_text(summary, encoding="utf-8")
    return EXIT_OK


# ------------------------------------------------------------ eval/predict


def _load_checkpoint_for(cfg: RunConfig, checkpoint_path, split: Split | None):
    vocab, emb = load_vocab_and_embeddings(cfg, split)
    model, meta = load_checkpoint(checkpoint_path, emb, expected_vocab_hash=vocab.content_hash())
    return model, meta, vocab


def _evaluation_corpus(cfg: RunConfig, args) -> tuple[Corpus, Split | None]:
    if getattr(args, "dataset", None):
        corpus = parse_semeval_tsv(args.dataset)
        split = None
    else:
        split = load_datasets(cfg)
        corpus = getattr(split, args.split)
    if len(corpus) == 0:
        raise DataError("evaluation dataset is empty")
    return corpus, split


def cmd_eval(args) -> int:
    cfg = build_run_config(args)
    corpus, split = _evaluation_corpus(cfg, args)
    model, _, vocab = _load_checkpoint_for(cfg, args.checkpoint, split)
    encode_corpus(corpus, vocab)
    preds = predict_corpus(model, corpus, cfg.hp.batch_size)
    name = args.dataset if getattr(args, "dataset", None) else args.split
    print(format_metrics(compute_metrics(preds, [ex.stance for ex in corpus]), title=str(name)), end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = build_run_config(args)
    model, _, vocab = _load_checkpoint_for(cfg, args.checkpoint, None)
    sentence = tokenize(args.text)
    target = tokenize(args.target)
    ex = Example(
        sentence_tokens=sentence,
        target_tokens=target,
        stance="NONE",
        raw_text=args.text,
        raw_target=args.target,
        sentence_ids=[vocab.id_of(t) for t in sentence],
        target_ids=[vocab.id_of(t) for t in target],
    )
    out = model_forward(model, ex)
    probs = out.stance_probs.value
    for name, p in zip(STANCES, probs):
        print(f"{name}: {float(p):.4f}")
    print(f"prediction: {STANCES[int(np.argmax(probs))]}")
    return EXIT_OK


def cmd_dump_attention(args) -> int:
    cfg = build_run_config(args)
    corpus, split = _evaluation_corpus(cfg, args)
    model, _, vocab = _load_checkpoint_for(cfg, args.checkpoint, split)
    encode_corpus(corpus, vocab)
    out_path = Path(args.out) if args.out else Path(cfg.out_dir) / "attention.jsonl"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    html_path = Path(args.html) if args.html else None
    if html_path:
        html_path.parent.mkdir(parents=True, exist_ok=True)
    count = dump_attention(model, corpus, out_path, html_out=html_path)
    print(f"wrote {count} attention records to {out_path}")
    return EXIT_OK


# --------------------------------------------------------------- gradcheck


def _gradcheck_components():
    """(name, callable) pairs; each callable returns a max relative error."""
    rng = np.random.default_rng(20)

    def vec(n):
        return Tensor(rng.uniform(-1.5, 1.5, n))

    def mat(r, c):
        return Tensor(rng.uniform(-1.5, 1.5, (r, c)))

    coeff4 = np.array([0.7, -1.3, 0.4, 1.1])

    def reduce_with(t, coeffs):
        return dot(Tensor(np.array(coeffs[: t.value.shape[0]])), t)

    def unary_check(name, x_values):
        def run():
            x = Tensor(np.array(x_values))
            return finite_difference_check(lambda: reduce_with(apply_unary(x, name), coeff4), [x])

        return run

    def binary_check(name):
        def run():
            a, b = vec(4), vec(4)
            return finite_difference_check(
                lambda: reduce_with(apply_binary(a, b, name), coeff4), [a, b]
            )

        return run

    def matvec_check():
        w, x = mat(3, 4), vec(4)
        return finite_difference_check(lambda: reduce_with(matvec(w, x), coeff4), [w, x])

    def matmul_check():
        a, b = mat(2, 3), mat(4, 3)
        return finite_difference_check(lambda: sum_all(matmul_t(a, b)), [a, b])

    def softmax_check():
        x = vec(4)
        return finite_difference_check(lambda: reduce_with(softmax(x), coeff4), [x])

    def weighted_sum_check():
        alpha = Tensor(np.array([0.2, 0.5, 0.3]))
        hiddens = [vec(2) for _ in range(3)]
        return finite_difference_check(
            lambda: reduce_with(weighted_sum(alpha, hiddens), coeff4), [alpha] + hiddens
        )

    def lstm_params(input_dim, hidden):
        return LSTMParams.init(input_dim, hidden, np.random.default_rng(21), np.float64)

    def lstm_step_check():
        params = lstm_params(3, 2)
        x = vec(3)
        tensors = [x] + [t for _, t in params.named("p")]
        def f():
            state = lstm_step(x, zero_state(2, np.float64), params)
            return add(reduce_with(state.h, coeff4), reduce_with(state.c, [1.2, -0.8]))
        return finite_difference_check(f, tensors)

    def lstm_sequence_check():
        params = lstm_params(2, 2)
        xs = [vec(2) for _ in range(3)]
        tensors = xs + [t for _, t in params.named("p")]
        def f():
            states = run_lstm(xs, zero_state(2, np.float64), params, reverse=True)
            return reduce_with(states[0].h, coeff4)
        return finite_difference_check(f, tensors)

    def encoder_check():
        params = EncoderParams.init(2, 2, np.random.default_rng(22), np.float64)
        target = [vec(2) for _ in range(2)]
        sentence = [vec(2) for _ in range(3)]
        tensors = target + sentence + [t for _, t in params.named("enc")]
        def f():
            hiddens, summary = conditional_encode(target, sentence, params)
            return add(reduce_with(summary, coeff4), reduce_with(hiddens[1], coeff4))
        return finite_difference_check(f, tensors)

    def attention_check():
        params = AttentionParams.init(3, 8, np.random.default_rng(23), np.float64)
        summary = vec(4)
        hiddens = [vec(4) for _ in range(3)]
        tensors = [summary] + hiddens + [t for _, t in params.named("att")]
        def f():
            out = additive_attention(summary, hiddens, params)
            return reduce_with(out.s, coeff4)
        return finite_difference_check(f, tensors)

    def max_pool_check():
        # spread the entries so eps perturbations cannot flip any argmax
        hiddens = [Tensor(rng.uniform(-2.0, 2.0, 3) + sign) for sign in (-4.0, 0.0, 4.0)]
        return finite_difference_check(
            lambda: reduce_with(max_pool_encode(hiddens), coeff4), hiddens
        )

    def _tiny_invar_setup():
        emb_rng = np.random.default_rng(24)
        values = emb_rng.uniform(-0.5, 0.5, (8, 3))
        values[0] = 0.0
        emb = EmbeddingMatrix(values=values, frozen=True)
        spec = ModelSpec(variant="BCAInvar", embed_dim=3, hidden_dim=2, attn_dim=2, num_domains=2)
        model = build_model(spec, 25, emb, dtype=np.float64)
        def ex(sent, tgt, stance, domain):
            return Example(
                sentence_tokens=[str(i) for i in sent],
                target_tokens=[str(i) for i in tgt],
                stance=stance,
                raw_text="",
                raw_target="",
                domain_index=domain,
                sentence_ids=sent,
                target_ids=tgt,
            )
        batch = [ex([2, 3, 4], [5], "FAVOR", 0), ex([6, 7], [3, 2], "AGAINST", 1)]
        gold = np.array([0, 1])
        domains = np.array([0, 1])
        return model, batch, gold, domains

    def model_forward_check():
        model, batch, gold, _ = _tiny_invar_setup()
        params = list(model.stance_path().values())
        def f():
            out = model_forward_batch(model, batch)
            return stance_loss_batch(out.stance_probs, gold)
        # wider step: some attention coordinates carry ~1e-8 gradients where
        # central-difference roundoff swamps the relative error at eps=1e-5
        return finite_difference_check(f, params, eps=3e-5)

    def invar_objective_check():
        # The optimized objective is a saddle: analytic gradients must match
        # central differences of stance - lam*domain on shared parameters
        # (the reversal layer negates the domain term there) and of
        # stance + lam*domain on the domain heads.
        model, batch, gold, domains = _tiny_invar_setup()
        lam = 0.3
        eps = 1e-5

        def losses():
            out = model_forward_batch(model, batch)
            s = stance_loss_batch(out.stance_probs, gold)
            d = domain_loss_batch(out.domain_probs, domains)
            return s, d

        params = model.params
        zero_grads(params.values())
        with Tape("float64") as tape:
            s, d = losses()
            tape.backward(add(s, scale(d, lam)))
        analytic = {
            k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
            for k, p in params.items()
        }
        zero_grads(params.values())
        worst = 0.0
        for name, p in params.items():
            sign = 1.0 if name in model.adversarial else -1.0
            flat = p.value.reshape(-1)
            a_flat = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                s_hi, d_hi = (float(t.value[0]) for t in losses())
                flat[i] = orig - eps
                s_lo, d_lo = (float(t.value[0]) for t in losses())
                flat[i] = orig
                numeric = ((s_hi + sign * lam * d_hi) - (s_lo + sign * lam * d_lo)) / (2 * eps)
                err = abs(a_flat[i] - numeric) / (abs(a_flat[i]) + abs(numeric) + 1e-12)
                worst = max(worst, err)
        return worst

    return [
        ("tanh", unary_check("tanh", [-1.2, 0.3, 0.9, -0.4])),
        ("sigmoid", unary_check("sigmoid", [-1.2, 0.3, 0.9, -0.4])),
        ("relu", unary_check("relu", [-1.2, 0.3, 0.9, -0.4])),
        ("log", unary_check("log", [0.4, 1.3, 2.2, 0.7])),
        ("add", binary_check("add")),
        ("mul", binary_check("mul")),
        ("sub", binary_check("sub")),
        ("matvec", matvec_check),
        ("matmul_t", matmul_check),
        ("softmax", softmax_check),
        ("weighted_sum", weighted_sum_check),
        ("lstm_step", lstm_step_check),
        ("lstm_sequence", lstm_sequence_check),
        ("conditional_encoder", encoder_check),
        ("attention", attention_check),
        ("max_pool", max_pool_check),
        ("stance_forward", model_forward_check),
        ("bcainvar_objective", invar_objective_check),
    ]


def cmd_gradcheck(args) -> int:
    started = time.perf_counter()
    failures = []
    for name, check in _gradcheck_components():
        err = check()
        status = "ok" if err < GRADCHECK_TOLERANCE else "FAIL"
        if status == "FAIL":
            failures.append(name)
        print(f"{name:<22}{err:.3e}  {status}")
    elapsed = time.perf_counter() - started
    if failures:
        print(f"gradcheck FAILED: {', '.join(failures)} ({elapsed:.1f}s)")
        return EXIT_DIAGNOSTIC
    print(f"gradcheck passed: 18 components under {GRADCHECK_TOLERANCE:g} ({elapsed:.1f}s)")
    return EXIT_OK


# -------------------------------------------------------------- entry point


def _add_common_flags(sub):
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--variant", help="model variant name")
    sub.add_argument("--lambda", dest="lam", type=float, help="adversarial loss weight")
    sub.add_argument("--seed", type=int, help="single training seed")
    sub.add_argument("--seeds", help="comma-separated seed list")
    sub.add_argument("--no-count-check", action="store_true", help="skip split count validation")
    sub.add_argument("--out-dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stancegen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model per seed")
    _add_common_flags(p_train)
    p_train.add_argument("--parallel-seeds", action="store_true", help="one process per seed")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p_eval.add_argument("--dataset", help="evaluate this TSV instead of a named split")
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="classify one sentence/target pair")
    _add_common_flags(p_pred)
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--text", required=True)
    p_pred.add_argument("--target", required=True)
    p_pred.set_defaults(func=cmd_predict)

    p_dump = sub.add_parser("dump-attention", help="write per-example attention records")
    _add_common_flags(p_dump)
    p_dump.add_argument("--checkpoint", required=True)
    p_dump.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p_dump.add_argument("--dataset", help="dump this TSV instead of a named split")
    p_dump.add_argument("--out", help="output JSONL path")
    p_dump.add_argument("--html", help="optional HTML heatmap path")
    p_dump.set_defaults(func=cmd_dump_attention)

    p_grad = sub.add_parser("gradcheck", help="finite-difference self-diagnostics")
    p_grad.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY


if __name__ == "__main__":
    sys.exit(main())
