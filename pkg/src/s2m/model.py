"""S2M: sequential sentence matching for multi-turn response selection."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import layers as nn
from . import tensor as T
from .blocks import SELF_REP_KINDS, PairInputs
from .data import Batch, EmbeddingTable
from .errors import ConfigError
from .integration import FORWARD, STRATEGIES, init_channels
from .tensor import Tensor

LOG_EPS = 1e-7


@dataclass
class ModelConfig:
    stacks: int = 7
    embed_dim: int = 200
    hidden_size: int = 200
    kernel_size: int = 3
    max_turns: int = 15
    max_len: int = 50
    self_rep_kind: str = "cnn"
    pooling: str = "max"
    cross_rep_enabled: bool = True
    self_rep_enabled: bool = True
    integration: str = "pure"
    word_filters: int = 16

    @property
    def num_filters(self):
        # block outputs re-enter the next block, so the filter count is the hidden size
        return self.hidden_size

    def validate(self) -> "ModelConfig":
        if self.stacks < 1:
            raise ConfigError("stacks must be >= 1")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ConfigError(f"kernel size must be odd, got {self.kernel_size}")
        if self.embed_dim != self.hidden_size:
            raise ConfigError("embed_dim must equal hidden_size (residual and direct connections add them)")
        if self.self_rep_kind not in SELF_REP_KINDS:
            raise ConfigError(f"self_rep_kind must be one of {SELF_REP_KINDS}")
        if self.pooling not in nn.POOLING:
            raise ConfigError(f"pooling must be one of {nn.POOLING}")
        if self.integration not in STRATEGIES:
            raise ConfigError(f"integration must be one of {STRATEGIES}")
        if not (self.self_rep_enabled or self.cross_rep_enabled):
            raise ConfigError("at least one of self/cross representation must be enabled")
        if self.integration != "pure" and not (self.self_rep_enabled and self.cross_rep_enabled):
            raise ConfigError("self/cross ablations are only defined for the pure strategy")
        for name in ("max_turns", "max_len", "hidden_size", "word_filters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        return self

    def to_record(self) -> dict[str, str]:
        return {k: str(v).lower() if isinstance(v, bool) else str(v) for k, v in asdict(self).items()}

    @classmethod
    def from_record(cls, record: dict[str, str]) -> "ModelConfig":
        values = {}
        for f in fields(cls):
            if f.name not in record:
                continue
            raw = record[f.name]
            if f.type in ("bool", bool):
                values[f.name] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif f.type in ("int", int):
                values[f.name] = int(raw)
            else:
                values[f.name] = raw.strip()
        return cls(**values)


def flatten(tree, prefix="") -> dict[str, Tensor]:
    out = {}
    items = tree.items() if isinstance(tree, dict) else enumerate(tree)
    for key, value in items:
        name = f"{prefix}{key}"
        if isinstance(value, Tensor):
            out[name] = value
        else:
            out.update(flatten(value, name + "."))
    return out


def binary_cross_entropy(g, labels) -> Tensor:
    """Mean over the batch of -[y log g + (1 - y) log(1 - g)], g clamped to [eps, 1 - eps]."""
    y = np.asarray(labels, dtype=g.dtype)
    g = T.clip(g, LOG_EPS, 1.0 - LOG_EPS)
    ll = T.mul(T.log(g), y) + T.mul(T.log(1.0 - g), 1.0 - y)
    return -T.mean(ll)


@dataclass
class ForwardResult:
    stack_scores: list[Tensor]
    channels: list[str]
    trace: dict | None = None

    def total(self) -> Tensor:
        g = self.stack_scores[0]
        for s in self.stack_scores[1:]:
            g = g + s
        return g

    def channel_losses(self, labels) -> dict[str, Tensor]:
        losses = {}
        for ch, g in zip(self.channels, self.stack_scores):
            term = binary_cross_entropy(g, labels)
            losses[ch] = term if ch not in losses else losses[ch] + term
        return losses


class S2M:
    """The matching model: parameters, embeddings and forward / loss / score."""

    def __init__(self, config: ModelConfig, embedding: EmbeddingTable, seed: int = 0, params=None):
        self.config = config.validate()
        if embedding.dim != config.embed_dim:
            raise ConfigError(f"embedding width {embedding.dim} != embed_dim {config.embed_dim}")
        self.frozen_embeddings = embedding.frozen
        self.embedding = T.Tensor(np.array(embedding.matrix, dtype=T.default_dtype()),
                                  requires_grad=not embedding.frozen)
        if params is None:
            params = init_channels(np.random.default_rng(seed), config)
        self.params = params

    # -- parameter views

    def named_parameters(self) -> dict[str, Tensor]:
        """Trainable tensors by dotted name (the embedding only when unfrozen)."""
        named = flatten(self.params)
        if not self.frozen_embeddings:
            named["embedding"] = self.embedding
        return named

    def state(self) -> dict[str, Tensor]:
        named = flatten(self.params)
        named["embedding"] = self.embedding
        return named

    def cast(self, dtype) -> "S2M":
        for t in self.state().values():
            t.data = t.data.astype(dtype)
            if t.grad is not None:
                t.grad = t.grad.astype(dtype)
        return self

    # -- forward

    def embed(self, ids, mask) -> Tensor:
        """Rows of the embedding table for ``ids``; masked positions are exactly zero."""
        return nn.mask_rows(T.take_rows(self.embedding, ids), mask)

    def pair_inputs(self, batch: Batch) -> PairInputs:
        B, N, Tu = batch.utterances.shape
        turn_mask = np.asarray(batch.turn_mask, dtype=bool)
        rows = np.flatnonzero(turn_mask.reshape(-1))
        row_index = np.full(B * N, len(rows), dtype=np.int64)
        row_index[rows] = np.arange(len(rows))
        u_ids = batch.utterances.reshape(B * N, Tu)[rows]
        u_mask = np.asarray(batch.utterance_mask, bool).reshape(B * N, Tu)[rows]
        owner = rows // N
        r_ids = batch.responses[owner]
        r_mask = np.asarray(batch.response_mask, bool)[owner]
        return PairInputs(self.embed(u_ids, u_mask), self.embed(r_ids, r_mask), u_mask, r_mask,
                          turn_mask, row_index, B, N)

    def forward(self, batch: Batch, trace=False) -> ForwardResult:
        x = self.pair_inputs(batch)
        record = {"pairs": x} if trace else None
        scored = FORWARD[self.config.integration](self.params, x, self.config, record)
        return ForwardResult([g for _, g in scored], [c for c, _ in scored], record)

    def loss(self, batch: Batch) -> Tensor:
        """Sum over stacks (and channels) of the batch-mean log loss."""
        result = self.forward(batch)
        total = None
        for g in result.stack_scores:
            term = binary_cross_entropy(g, batch.labels)
            total = term if total is None else total + term
        return total

    def score(self, batch: Batch):
        """(g, per_stack): g = sum of per-stack scores, shape (B,); per_stack (B, S)."""
        with T.no_grad():
            result = self.forward(batch)
        per_stack = np.stack([s.data for s in result.stack_scores], axis=1)
        return per_stack.sum(axis=1), per_stack
