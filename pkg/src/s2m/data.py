"""Corpus parsing, vocabulary, embeddings and batching.

Corpus lines follow the public Ubuntu / Douban / E-commerce release layout::

    label \\t utterance_1 \\t ... \\t utterance_t \\t response

with whitespace-separated tokens.
"""

from __future__ import annotations

import collections
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


@dataclass
class DialogueSample:
    label: int
    context: list[list[str]]
    response: list[str]

    def __post_init__(self):
        if not self.context:
            raise DataError("context must contain at least one utterance")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")

    @property
    def turns(self) -> int:
        return len(self.context)


def parse_sample_line(line: str, line_number: int | None = None, path=None) -> DialogueSample:
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) < 3:
        raise DataError(f"expected label, >=1 utterance and a response, got {len(fields)} field(s)",
                        path, line_number)
    label = fields[0].strip()
    if label not in ("0", "1"):
        raise DataError(f"label must be 0 or 1, got {label!r}", path, line_number)
    return DialogueSample(
        label=int(label),
        context=[f.split() for f in fields[1:-1]],
        response=fields[-1].split(),
    )


def format_sample(sample: DialogueSample) -> str:
    """Inverse of :func:`parse_sample_line` for single-space tokenised text."""
    parts = [str(sample.label)] + [" ".join(u) for u in sample.context] + [" ".join(sample.response)]
    return "\t".join(parts)


def read_corpus(path) -> list[DialogueSample]:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            return [parse_sample_line(line, i, path) for i, line in enumerate(fh, 1) if line.strip()]
    except OSError as exc:
        raise DataError(f"cannot read corpus: {exc.strerror}", path) from exc


def write_corpus(path, samples: Iterable[DialogueSample]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(format_sample(s) + "\n")


# -- vocabulary ------------------------------------------------------------

class Vocabulary:
    """Token <-> id map. Id 0 is padding, id 1 unknown; real tokens start at 2."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def id(self, token: str) -> int:
        # a literal padding token in text is just an unknown word
        return self.stoi.get(token, UNK_ID) or UNK_ID

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def tokens(self) -> list[str]:
        return self.itos[2:]

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for t in self.tokens():
                fh.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        try:
            with Path(path).open(encoding="utf-8") as fh:
                return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])
        except OSError as exc:
            raise DataError(f"cannot read vocabulary: {exc.strerror}", path) from exc


def build_vocabulary(corpus: Iterable, min_count: int = 1) -> Vocabulary:
    """Frequency-ordered vocabulary; ties broken lexicographically.

    ``corpus`` may hold DialogueSamples, token lists or raw strings.
    """
    if min_count < 1:
        raise ConfigError("min_count must be >= 1")
    counts = collections.Counter()
    seen = False
    for item in corpus:
        seen = True
        if isinstance(item, DialogueSample):
            for u in item.context:
                counts.update(u)
            counts.update(item.response)
        elif isinstance(item, str):
            counts.update(item.split())
        else:
            counts.update(item)
    if not seen or not counts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_count and t not in (PAD_TOKEN, UNK_TOKEN)]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


# -- embeddings ------------------------------------------------------------

@dataclass
class EmbeddingTable:
    """Word vectors stored one row per vocabulary id (the transpose of a d x |V| layout)."""

    matrix: np.ndarray
    frozen: bool = True

    @property
    def dim(self):
        return self.matrix.shape[1]

    def __len__(self):
        return self.matrix.shape[0]


def random_embeddings(vocab_size: int, dim: int, rng, frozen=True) -> EmbeddingTable:
    m = rng.uniform(-0.1, 0.1, size=(vocab_size, dim))
    m[PAD_ID] = 0.0
    return EmbeddingTable(m.astype(np.float32), frozen)


def load_embeddings(path, vocab: Vocabulary, dim: int, rng, frozen=True) -> EmbeddingTable:
    """Fill rows from a word2vec-style text file; other rows uniform in [-0.1, 0.1]."""
    table = random_embeddings(len(vocab), dim, rng, frozen)
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read embeddings: {exc.strerror}", path) from exc
    found = 0
    with fh:
        for n, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if n == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                if int(parts[1]) != dim:
                    raise DataError(f"embedding dimension {parts[1]} != configured {dim}", path, n)
                continue
            if len(parts) - 1 != dim:
                raise DataError(f"embedding dimension {len(parts) - 1} != configured {dim}", path, n)
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float32)
            except ValueError as exc:
                raise DataError(f"unreadable embedding values: {exc}", path, n) from exc
            idx = vocab.stoi.get(parts[0])
            if idx is not None and idx != PAD_ID:
                table.matrix[idx] = vec
                found += 1
    log.info("loaded %d/%d embedding rows from %s", found, len(vocab) - 2, path)
    table.matrix[PAD_ID] = 0.0
    return table


# -- batching --------------------------------------------------------------

@dataclass
class Batch:
    utterances: np.ndarray       # (B, turns, len) int
    utterance_mask: np.ndarray   # (B, turns, len) bool
    responses: np.ndarray        # (B, len) int
    response_mask: np.ndarray    # (B, len) bool
    turn_mask: np.ndarray        # (B, turns) bool
    labels: np.ndarray           # (B,) float
    turn_counts: np.ndarray = field(default=None)

    def __len__(self):
        return self.labels.shape[0]


def _encode(tokens, vocab, max_len):
    ids = vocab.encode(tokens[:max_len])
    return ids if ids else [UNK_ID]


def make_batch(samples: Sequence[DialogueSample], vocab: Vocabulary, max_turns=15, max_len=50,
               pad_to_longest=False) -> Batch:
    """Pad and truncate samples into arrays.

    Each utterance/response keeps its first ``max_len`` tokens; a context keeps
    its last ``max_turns`` utterances, placed in the leading turn slots.
    With ``pad_to_longest`` the padded sizes shrink to the longest item in the
    batch instead of the configured maxima. An empty utterance is encoded as a
    single unknown token.
    """
    contexts = [[_encode(u, vocab, max_len) for u in s.context[-max_turns:]] for s in samples]
    responses = [_encode(s.response, vocab, max_len) for s in samples]
    if pad_to_longest:
        n_turns = max(len(c) for c in contexts)
        u_len = max(len(u) for c in contexts for u in c)
        r_len = max(len(r) for r in responses)
    else:
        n_turns, u_len, r_len = max_turns, max_len, max_len
    B = len(samples)
    utt = np.zeros((B, n_turns, u_len), dtype=np.int64)
    resp = np.zeros((B, r_len), dtype=np.int64)
    turn_mask = np.zeros((B, n_turns), dtype=bool)
    for b, (ctx, r) in enumerate(zip(contexts, responses)):
        for t, u in enumerate(ctx):
            utt[b, t, :len(u)] = u
        turn_mask[b, :len(ctx)] = True
        resp[b, :len(r)] = r
    return Batch(
        utterances=utt,
        utterance_mask=utt != PAD_ID,
        responses=resp,
        response_mask=resp != PAD_ID,
        turn_mask=turn_mask,
        labels=np.array([s.label for s in samples], dtype=np.float64),
        turn_counts=turn_mask.sum(axis=1),
    )


def iterate_batches(samples: Sequence, batch_size: int, rng=None):
    """Yield lists of samples; shuffled by ``rng`` when given."""
    order = np.arange(len(samples))
    if rng is not None:
        rng.shuffle(order)
    for start in range(0, len(order), batch_size):
        yield [samples[i] for i in order[start:start + batch_size]]
