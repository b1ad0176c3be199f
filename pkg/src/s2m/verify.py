"""Finite-difference verification of the full training loss on a tiny model."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import DialogueSample, EmbeddingTable, Vocabulary, make_batch
from .gradcheck import TensorCheck, check_gradients
from .model import ModelConfig, S2M

TOLERANCE = 1e-4


@dataclass
class GradCheckReport:
    label: str
    checks: list[TensorCheck]
    seconds: float

    @property
    def max_error(self):
        return max(c.error for c in self.checks)

    @property
    def worst(self):
        return max(self.checks, key=lambda c: c.error)

    @property
    def passed(self):
        return self.max_error < TOLERANCE


def tiny_problem(seed=0, dim=8, tokens=5):
    """Two 2-turn samples over a 10-word vocabulary, lengths 1..5 so masks matter."""
    rng = np.random.default_rng(seed)
    vocab = Vocabulary([f"w{i}" for i in range(10)])
    words = vocab.tokens()

    def utt(n):
        return [str(w) for w in rng.choice(words, size=n)]

    samples = [
        DialogueSample(1, [utt(tokens), utt(3)], utt(4)),
        DialogueSample(0, [utt(2), utt(tokens)], utt(tokens)),
    ]
    # unit-scale vectors keep every gradient well above finite-difference noise
    matrix = rng.uniform(-1.0, 1.0, size=(len(vocab), dim))
    matrix[0] = 0.0
    return vocab, samples, EmbeddingTable(matrix, frozen=False)


def grad_check(integration="pure", self_rep_kind="cnn", pooling="max", max_entries=8,
               seed=0, self_rep_enabled=True, cross_rep_enabled=True) -> GradCheckReport:
    label = f"integration={integration} self_rep={self_rep_kind} pooling={pooling}"
    if not (self_rep_enabled and cross_rep_enabled):
        label += f" self={self_rep_enabled} cross={cross_rep_enabled}"
    start = time.perf_counter()
    with T.precision("64"):
        vocab, samples, table = tiny_problem(seed)
        cfg = ModelConfig(stacks=2, embed_dim=8, hidden_size=8, max_turns=2, max_len=5,
                          self_rep_kind=self_rep_kind, pooling=pooling, integration=integration,
                          self_rep_enabled=self_rep_enabled, cross_rep_enabled=cross_rep_enabled)
        model = S2M(cfg, table, seed=seed + 1).cast(np.float64)
        batch = make_batch(samples, vocab, cfg.max_turns, cfg.max_len)
        checks = check_gradients(lambda: model.loss(batch), model.named_parameters(),
                                 max_entries=max_entries, rng=np.random.default_rng(seed))
    return GradCheckReport(label, checks, time.perf_counter() - start)


def covering_matrix():
    """12 runs in which every (strategy, self kind), (strategy, pooling) and
    (self kind, pooling) pair occurs at least once."""
    strategies = ("pure", "i1", "i2", "i3")
    kinds = ("cnn", "gru", "attention")
    poolings = ("max", "mean", "gru")
    return [(s, k, poolings[(i + j) % 3]) for i, s in enumerate(strategies) for j, k in enumerate(kinds)]


def full_matrix():
    return list(itertools.product(("pure", "i1", "i2", "i3"), ("cnn", "gru", "attention"),
                                  ("max", "mean", "gru")))
