"""Dataset ingestion: stance TSV parsing, tweet tokenization, vocabulary
construction, pretrained embedding loading, and the unseen-target split."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError

STANCES = ("FAVOR", "AGAINST", "NONE")
STANCE_TO_INDEX = {s: i for i, s in enumerate(STANCES)}

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

TRAIN_TARGETS = (
    "Atheism",
    "Climate Change is a Real Concern",
    "Feminist Movement",
    "Legalization of Abortion",
)
DEV_TARGET = "Hillary Clinton"
TEST_TARGET = "Donald Trump"

_TARGET_ALIASES = {
    "atheism": "Atheism",
    "climate change is a real concern": "Climate Change is a Real Concern",
    "feminist movement": "Feminist Movement",
    "legalization of abortion": "Legalization of Abortion",
    "legality of abortion": "Legalization of Abortion",
    "hillary clinton": "Hillary Clinton",
    "hillary": "Hillary Clinton",
    "donald trump": "Donald Trump",
    "trump": "Donald Trump",
}

# label counts the split is validated against (FAVOR, AGAINST, NONE)
EXPECTED_TRAIN_COUNTS = (619, 982, 574)
EXPECTED_DEV_TOTAL = 1278
EXPECTED_TEST_TOTAL = 707


@dataclass
class Example:
    """One tweet/target pair; token ids are filled in by encode_corpus."""

    sentence_tokens: list[str]
    target_tokens: list[str]
    stance: str
    raw_text: str
    raw_target: str
    domain_index: int | None = None
    sentence_ids: list[int] | None = None
    target_ids: list[int] | None = None


@dataclass
class Corpus:
    examples: list[Example] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def target_counts(self) -> dict[str, int]:
        return dict(Counter(e.raw_target for e in self.examples))

    def label_counts(self) -> dict[str, int]:
        counts = Counter(e.stance for e in self.examples)
        return {s: counts.get(s, 0) for s in STANCES}


@dataclass(frozen=True)
class Vocabulary:
    """Token to id map; id 0 is PAD, id 1 is UNK."""

    token_to_id: dict[str, int]

    def __len__(self) -> int:
        return len(self.token_to_id)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def serialize(self) -> str:
        rows = sorted(self.token_to_id.items(), key=lambda kv: kv[1])
        return "".join(f"{tok}\t{i}\n" for tok, i in rows)

    def content_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        mapping: dict[str, int] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"expected 'token<TAB>id', got {line!r}", line=lineno)
            mapping[parts[0]] = int(parts[1])
        return cls(mapping)


@dataclass
class EmbeddingMatrix:
    """Frozen |V| x dim lookup table; rows align with vocabulary ids."""

    values: np.ndarray
    frozen: bool = True

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def content_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()


_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_MENTION_RE = re.compile(r"@\w+")
_TOKEN_RE = re.compile(r"<url>|<user>|<unk>|<pad>|[a-z0-9_']+|[^\sa-z0-9_']+")


def tokenize(text: str) -> list[str]:
    """Lowercase, normalize URLs/mentions, strip '#', split word/punct runs.

    Never returns an empty list: degenerate input falls back to one UNK.
    """
    text = text.lower()
    text = _URL_RE.sub(" <url> ", text)
    text = _MENTION_RE.sub(" <user> ", text)
    text = text.replace("#", " ")
    tokens = _TOKEN_RE.findall(text)
    return tokens if tokens else [UNK_TOKEN]


def parse_semeval_tsv(path) -> Corpus:
    """Parse a 4-column (ID, Target, Tweet, Stance) TSV with one header line."""
    path = Path(path)
    text = path.read_text(encoding="utf-8-sig")
    examples: list[Example] = []
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file: missing header", line=1)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError(f"expected 4 tab-separated columns, got {len(cols)}", line=lineno)
        _, target, tweet, stance_raw = cols
        stance = stance_raw.strip().upper()
        if stance not in STANCE_TO_INDEX:
            raise ParseError(f"unknown stance {stance_raw.strip()!r}", line=lineno)
        examples.append(
            Example(
                sentence_tokens=tokenize(tweet),
                target_tokens=tokenize(target),
                stance=stance,
                raw_text=tweet,
                raw_target=target,
            )
        )
    return Corpus(examples)


def build_vocab(corpora: list[Corpus], min_count: int = 1) -> Vocabulary:
    """Count training tokens and assign ids by (count desc, token asc)."""
    if not corpora:
        raise ValueError("build_vocab requires at least one corpus")
    counts: Counter = Counter()
    for corpus in corpora:
        for ex in corpus:
            counts.update(ex.sentence_tokens)
            counts.update(ex.target_tokens)
    counts.pop(PAD_TOKEN, None)
    counts.pop(UNK_TOKEN, None)
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    mapping = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for i, tok in enumerate(kept, start=2):
        mapping[tok] = i
    return Vocabulary(mapping)


def _hash_seeded_vector(token: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(seed).uniform(-0.05, 0.05, dim)


def load_embeddings(path, vocab: Vocabulary, dim: int) -> EmbeddingMatrix:
    """Read "token v1 ... v_dim" lines; PAD row is zeros; tokens missing from
    the file get a deterministic hash-seeded vector in [-0.05, 0.05]."""
    found: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            tok = parts[0]
            if tok not in vocab.token_to_id:
                continue
            if len(parts) - 1 != dim:
                raise ParseError(
                    f"expected {dim} values for token {tok!r}, got {len(parts) - 1}", line=lineno
                )
            found[tok] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
    values = np.zeros((len(vocab), dim), dtype=np.float64)
    for tok, idx in vocab.token_to_id.items():
        if idx == PAD_ID:
            continue
        vec = found.get(tok)
        values[idx] = vec if vec is not None else _hash_seeded_vector(tok, dim)
    return EmbeddingMatrix(values=values, frozen=True)


def random_embeddings(vocab: Vocabulary, dim: int) -> EmbeddingMatrix:
    """Hash-seeded vectors for every non-PAD token (no pretrained file)."""
    values = np.zeros((len(vocab), dim), dtype=np.float64)
    for tok, idx in vocab.token_to_id.items():
        if idx != PAD_ID:
            values[idx] = _hash_seeded_vector(tok, dim)
    return EmbeddingMatrix(values=values, frozen=True)


def encode_corpus(corpus: Corpus, vocab: Vocabulary) -> Corpus:
    """Fill in token ids for every example; returns the same corpus."""
    for ex in corpus:
        ex.sentence_ids = [vocab.id_of(t) for t in ex.sentence_tokens]
        ex.target_ids = [vocab.id_of(t) for t in ex.target_tokens]
    return corpus


@dataclass
class Split:
    train: Corpus
    dev: Corpus
    test: Corpus
    domain_names: tuple[str, ...]


def canonical_target(raw: str) -> str | None:
    return _TARGET_ALIASES.get(raw.strip().lower())


def make_split(full: Corpus, check_counts: bool = True) -> Split:
    """Partition by target: four training domains, Hillary dev, Trump test.

    With check_counts, the split is validated against the expected label
    distribution (train FAVOR/AGAINST/NONE = 619/982/574, dev total 1278,
    test total 707).
    """
    buckets: dict[str, list[Example]] = {t: [] for t in TRAIN_TARGETS}
    buckets[DEV_TARGET] = []
    buckets[TEST_TARGET] = []
    for ex in full:
        canon = canonical_target(ex.raw_target)
        if canon is None:
            found = sorted(set(e.raw_target for e in full))
            raise DataError(f"unrecognized target {ex.raw_target!r}; targets found: {found}")
        buckets[canon].append(ex)
    missing = [t for t, rows in buckets.items() if not rows]
    if missing:
        found = sorted(set(e.raw_target for e in full))
        raise DataError(f"missing target(s) {missing}; targets found: {found}")
    for i, name in enumerate(TRAIN_TARGETS):
        for ex in buckets[name]:
            ex.domain_index = i
    for name in (DEV_TARGET, TEST_TARGET):
        for ex in buckets[name]:
            ex.domain_index = None
    train = Corpus([ex for name in TRAIN_TARGETS for ex in buckets[name]])
    dev = Corpus(buckets[DEV_TARGET])
    test = Corpus(buckets[TEST_TARGET])
    if check_counts:
        got = tuple(train.label_counts()[s] for s in STANCES)
        if got != EXPECTED_TRAIN_COUNTS:
            raise DataError(
                f"train label counts {got} != expected {EXPECTED_TRAIN_COUNTS} "
                "(use --no-count-check to bypass)"
            )
        if len(dev) != EXPECTED_DEV_TOTAL:
            raise DataError(f"dev total {len(dev)} != expected {EXPECTED_DEV_TOTAL}")
        if len(test) != EXPECTED_TEST_TOTAL:
            raise DataError(f"test total {len(test)} != expected {EXPECTED_TEST_TOTAL}")
    return Split(train=train, dev=dev, test=test, domain_names=TRAIN_TARGETS)
