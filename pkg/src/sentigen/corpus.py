"""Dialogue corpus handling.

Loads JSON-lines dialogue data (one object per line with ``history``,
``response``, and either ``label`` or ``emoji``), binarizes emoji sentiment
through a bundled lookup table, tokenizes, builds vocabularies, and
generates the deterministic synthetic corpus used for desk-scale
verification.

Tokenization is lowercased whitespace splitting with punctuation split off
and digit runs collapsed to the reserved ``<dgt>`` token. The record format,
the 30-token default truncation, and the emoji table are artifact
conventions; the emoji table is data, not code, and ships as a revisable
asset (it is a stand-in: no canonical binary assignment exists).
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

__all__ = [
    "SentimentLabel",
    "Utterance",
    "DialogueExample",
    "Vocabulary",
    "SplitStats",
    "CorpusSplit",
    "CorpusError",
    "IngestConfig",
    "tokenize",
    "load_emoji_table",
    "map_emoji_to_sentiment",
    "build_vocabulary",
    "load_corpus",
    "generate_synthetic_corpus",
    "serialize_examples",
    "write_jsonl",
    "PAD", "BOS", "EOS", "UNK", "DGT", "SPECIALS",
]

SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>", "<dgt>")
PAD, BOS, EOS, UNK, DGT = range(5)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(ValueError):
    pass


class SentimentLabel(Enum):
    NEGATIVE = 0
    POSITIVE = 1

    def __str__(self) -> str:
        return "positive" if self is SentimentLabel.POSITIVE else "negative"

    @property
    def as_int(self) -> int:
        return self.value

    @classmethod
    def parse(cls, value) -> "SentimentLabel":
        if isinstance(value, cls):
            return value
        if value in (1, "1", "positive"):
            return cls.POSITIVE
        if value in (0, "0", "negative"):
            return cls.NEGATIVE
        raise CorpusError(f"unrecognized sentiment label {value!r}")


@dataclass(frozen=True)
class Utterance:
    """A token-id sequence; never empty, never padded internally."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise CorpusError("utterance must contain at least one token")
        if PAD in self.tokens[:-1]:
            raise CorpusError("PAD id inside an utterance")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class DialogueExample:
    history: Utterance
    response: Utterance
    label: SentimentLabel


def tokenize(text: str) -> list[str]:
    tokens = _TOKEN_RE.findall(text.lower())
    return [SPECIALS[DGT] if t.isdigit() else t for t in tokens]


class Vocabulary:
    """Bidirectional token<->id map with the five reserved specials at ids 0-4.

    Non-special tokens are ordered by descending corpus frequency with ties
    broken lexicographically; anything unseen encodes to UNK.
    """

    def __init__(self, tokens: list[str]):
        if tuple(tokens[:5]) != SPECIALS:
            raise CorpusError("vocabulary must start with the reserved specials")
        if len(set(tokens)) != len(tokens):
            raise CorpusError("duplicate token in vocabulary")
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def text(self, ids) -> str:
        return " ".join(self.decode(ids))

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.id_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


def build_vocabulary(token_lists, max_size: int, min_count: int = 1) -> Vocabulary:
    if max_size < len(SPECIALS):
        raise CorpusError(f"max_size {max_size} cannot hold the {len(SPECIALS)} reserved specials")
    counts: dict[str, int] = {}
    for tokens in token_lists:
        for t in tokens:
            if t in SPECIALS:
                continue
            counts[t] = counts.get(t, 0) + 1
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )[: max_size - len(SPECIALS)]
    return Vocabulary(list(SPECIALS) + kept)


# -- emoji sentiment -------------------------------------------------------


def load_emoji_table(path=None) -> dict[str, SentimentLabel]:
    """Load the two-column emoji->label table (bundled asset by default)."""
    if path is None:
        text = resources.files("sentigen").joinpath("assets/emoji_sentiment.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    table: dict[str, SentimentLabel] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        emoji, _, label = line.partition("\t")
        table[emoji] = SentimentLabel.parse(label.strip())
    return table


def map_emoji_to_sentiment(emoji: str, table: dict[str, SentimentLabel]) -> SentimentLabel | None:
    """Deterministic lookup; None means the emoji is not in the table."""
    return table.get(emoji)


# -- loading ----------------------------------------------------------------


@dataclass
class IngestConfig:
    max_len: int = 30
    max_vocab: int = 10000
    min_count: int = 1
    dev_fraction: float = 0.1
    test_fraction: float = 0.1
    split_seed: int = 13
    emoji_table_path: str | None = None


@dataclass
class SplitStats:
    n_examples: int = 0
    n_positive: int = 0
    n_negative: int = 0

    @property
    def ratio(self) -> float | None:
        """Positive:negative ratio; None when there are no negatives."""
        if self.n_negative == 0:
            return None
        return self.n_positive / self.n_negative

    def as_dict(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "ratio": self.ratio,
        }


def _stats_of(examples) -> SplitStats:
    pos = sum(1 for e in examples if e.label is SentimentLabel.POSITIVE)
    return SplitStats(len(examples), pos, len(examples) - pos)


@dataclass
class CorpusSplit:
    train: list[DialogueExample]
    dev: list[DialogueExample]
    test: list[DialogueExample]
    vocab: Vocabulary
    skipped: int = 0

    @property
    def stats(self) -> dict:
        per = {
            name: _stats_of(getattr(self, name)).as_dict()
            for name in ("train", "dev", "test")
        }
        per["overall"] = _stats_of(self.train + self.dev + self.test).as_dict()
        per["skipped"] = self.skipped
        return per

    def split(self, name: str) -> list[DialogueExample]:
        return getattr(self, name)


def _encode_utterance(text: str, vocab: Vocabulary, max_len: int) -> Utterance | None:
    tokens = tokenize(text)[:max_len]
    if not tokens:
        return None
    return Utterance(tuple(vocab.encode(tokens)))


def _resolve_label(record: dict, table: dict) -> SentimentLabel | None:
    if "label" in record and record["label"] is not None:
        return SentimentLabel.parse(record["label"])
    if "emoji" in record and record["emoji"]:
        return map_emoji_to_sentiment(record["emoji"], table)
    return None


def load_corpus(path, vocab: Vocabulary | None = None, config: IngestConfig | None = None) -> CorpusSplit:
    """Read a JSON-lines dialogue file into tokenized, labeled splits.

    Pure in (file bytes, config): the same input always produces the same
    CorpusSplit. Malformed lines raise :class:`CorpusError` naming the line;
    records whose label cannot be resolved are skipped and counted.
    """
    config = config or IngestConfig()
    table = load_emoji_table(config.emoji_table_path)
    raw: list[tuple[dict, str | None]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON ({err.msg})") from None
            if not isinstance(record, dict) or "history" not in record or "response" not in record:
                raise CorpusError(f"{path}: line {lineno}: record needs history and response fields")
            raw.append((record, record.get("split")))

    if vocab is None:
        token_lists = []
        for record, _ in raw:
            token_lists.append(tokenize(record["history"])[: config.max_len])
            token_lists.append(tokenize(record["response"])[: config.max_len])
        vocab = build_vocabulary(token_lists, config.max_vocab, config.min_count)

    examples: list[tuple[DialogueExample, str | None]] = []
    skipped = 0
    for record, split_name in raw:
        label = _resolve_label(record, table)
        history = _encode_utterance(record["history"], vocab, config.max_len)
        response = _encode_utterance(record["response"], vocab, config.max_len)
        if label is None or history is None or response is None:
            skipped += 1
            continue
        examples.append((DialogueExample(history, response, label), split_name))

    named = {"train": [], "dev": [], "test": []}
    unassigned = []
    for ex, split_name in examples:
        if split_name in named:
            named[split_name].append(ex)
        else:
            unassigned.append(ex)
    if unassigned:
        order = list(range(len(unassigned)))
        random.Random(config.split_seed).shuffle(order)
        n = len(order)
        n_test = int(n * config.test_fraction)
        n_dev = int(n * config.dev_fraction)
        test_idx = set(order[:n_test])
        dev_idx = set(order[n_test : n_test + n_dev])
        for i, ex in enumerate(unassigned):
            if i in test_idx:
                named["test"].append(ex)
            elif i in dev_idx:
                named["dev"].append(ex)
            else:
                named["train"].append(ex)
    return CorpusSplit(named["train"], named["dev"], named["test"], vocab, skipped=skipped)


# -- synthetic verification corpus ------------------------------------------
#
# Desk-scale stand-in corpus. The response lexicon is a deterministic
# function of (history topic, sentiment label): positive responses draw
# opinion words only from POSITIVE_LEXICON, negative ones only from
# NEGATIVE_LEXICON, and both echo a topic noun from the history. That makes
# the label perfectly recoverable from the response text, which is what
# desk-scale controllability checks rely on.

TOPICS = {
    "movie": ["movie", "film", "show", "trailer"],
    "food": ["dinner", "pizza", "coffee", "cake"],
    "game": ["game", "match", "team", "score"],
    "trip": ["trip", "beach", "flight", "hotel"],
    "music": ["song", "album", "concert", "band"],
}

POSITIVE_LEXICON = ["great", "love", "happy", "awesome", "nice", "amazing", "fun", "best", "cool", "sweet"]
NEGATIVE_LEXICON = ["bad", "hate", "sad", "awful", "terrible", "boring", "annoying", "worst", "angry", "rough"]

_HISTORY_TEMPLATES = [
    "how was the {noun}",
    "did you like the {noun}",
    "what about the {noun}",
    "tell me about the {noun}",
    "what did you think of the {noun}",
    "so how did the {noun} go",
]

_RESPONSE_TEMPLATES = [
    "the {noun} was {a}",
    "i think the {noun} was {a}",
    "that {noun} was {a} really {b}",
    "honestly the {noun} felt {a}",
    "it was {a} the {noun} was {b}",
]


def generate_synthetic_corpus(seed: int, n_pairs: int) -> CorpusSplit:
    """Deterministic templated corpus with an exact 3:1 positive:negative mix.

    The same seed always produces byte-identical examples. Splits are
    stratified by label (80/10/10) so every split keeps the global ratio.
    """
    if n_pairs < 10:
        raise CorpusError("need at least 10 pairs for a usable corpus")
    rng = random.Random(seed)
    topic_names = sorted(TOPICS)
    records: list[tuple[str, str, SentimentLabel]] = []
    for i in range(n_pairs):
        label = SentimentLabel.NEGATIVE if i % 4 == 3 else SentimentLabel.POSITIVE
        topic = rng.choice(topic_names)
        noun = rng.choice(TOPICS[topic])
        lexicon = POSITIVE_LEXICON if label is SentimentLabel.POSITIVE else NEGATIVE_LEXICON
        a = rng.choice(lexicon)
        b = rng.choice(lexicon)
        history = rng.choice(_HISTORY_TEMPLATES).format(noun=noun)
        response = rng.choice(_RESPONSE_TEMPLATES).format(noun=noun, a=a, b=b)
        records.append((history, response, label))

    token_lists = [tokenize(h) for h, _, _ in records] + [tokenize(r) for _, r, _ in records]
    vocab = build_vocabulary(token_lists, max_size=200, min_count=1)

    examples = [
        DialogueExample(
            Utterance(tuple(vocab.encode(tokenize(h)))),
            Utterance(tuple(vocab.encode(tokenize(r)))),
            label,
        )
        for h, r, label in records
    ]

    named = {"train": [], "dev": [], "test": []}
    for want in (SentimentLabel.POSITIVE, SentimentLabel.NEGATIVE):
        idx = [i for i, ex in enumerate(examples) if ex.label is want]
        rng.shuffle(idx)
        n = len(idx)
        n_test = max(1, n // 10)
        n_dev = max(1, n // 10)
        for j, i in enumerate(idx):
            if j < n_test:
                named["test"].append(examples[i])
            elif j < n_test + n_dev:
                named["dev"].append(examples[i])
            else:
                named["train"].append(examples[i])
    return CorpusSplit(named["train"], named["dev"], named["test"], vocab)


# -- serialization ------------------------------------------------------------


def serialize_examples(examples, vocab: Vocabulary, split_name: str | None = None) -> str:
    lines = []
    for ex in examples:
        record = {
            "history": vocab.text(ex.history.tokens),
            "response": vocab.text(ex.response.tokens),
            "label": str(ex.label),
        }
        if split_name is not None:
            record["split"] = split_name
        lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def write_jsonl(corpus: CorpusSplit, path) -> None:
    """Serialize a full CorpusSplit, preserving split assignments."""
    chunks = [
        serialize_examples(corpus.split(name), corpus.vocab, split_name=name)
        for name in ("train", "dev", "test")
    ]
    Path(path).write_text("".join(chunks), encoding="utf-8")
