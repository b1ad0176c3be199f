"""Training loop, candidate grouping and evaluation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import DialogueSample, Vocabulary, iterate_batches, make_batch
from .errors import DataError, TrainingDiverged
from .metrics import EvalSession, MetricReport, aggregate
from .model import S2M
from .optim import Adam
from .tensor import backward

log = logging.getLogger(__name__)


def group_consecutive(samples: Sequence[DialogueSample], group_size: int) -> list[list[DialogueSample]]:
    """Split a test file into sessions of ``group_size`` consecutive candidate lines."""
    if not samples:
        raise DataError("empty evaluation file")
    if group_size < 1 or len(samples) % group_size:
        raise DataError(f"{len(samples)} lines cannot be split into groups of {group_size}")
    return [list(samples[i:i + group_size]) for i in range(0, len(samples), group_size)]


def group_by_id(samples: Sequence[DialogueSample], ids: Sequence[str]):
    """Group candidates by an explicit session id, keeping first-seen order."""
    if not samples:
        raise DataError("empty evaluation file")
    groups: dict[str, list] = {}
    for sid, s in zip(ids, samples):
        groups.setdefault(sid, []).append(s)
    return list(groups.values()), list(groups)


def score_group(model: S2M, group: Sequence[DialogueSample], vocab: Vocabulary):
    """Score one context's candidates as a single batch -> (g, per_stack)."""
    cfg = model.config
    batch = make_batch(group, vocab, cfg.max_turns, cfg.max_len, pad_to_longest=True)
    return model.score(batch)


def score_groups(model, groups, vocab, workers=1):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda g: score_group(model, g, vocab), groups))
    return [score_group(model, g, vocab) for g in groups]


def evaluate(model, groups, vocab, workers=1, ids=None):
    """Score every group and aggregate ranking metrics; returns (report, sessions)."""
    scored = score_groups(model, groups, vocab, workers)
    sessions = []
    for i, (group, (g, _)) in enumerate(zip(groups, scored)):
        sid = ids[i] if ids is not None else str(i)
        sessions.append(EvalSession(sid, [(float(s), x.label) for s, x in zip(g, group)]))
    turns = [min(group[0].turns, model.config.max_turns) for group in groups]
    return aggregate(sessions, turns), sessions


@dataclass
class TrainResult:
    steps: int
    best_metric: float | None
    history: list[dict] = field(default_factory=list)
    log_lines: list[str] = field(default_factory=list)


def train(model: S2M, samples: Sequence[DialogueSample], vocab: Vocabulary, *, epochs=1,
          batch_size=20, lr=5e-4, decay=0.9, decay_every=5000, seed=0, max_steps=0,
          valid_groups=None, valid_metric=None, on_improve: Callable | None = None,
          log_line: Callable[[str], None] | None = None) -> TrainResult:
    """Adam training over ``epochs`` passes of shuffled mini-batches.

    After each epoch, if ``valid_groups`` is given, the ranking metric
    ``valid_metric`` (default R_n@1 for the group size) is computed and
    ``on_improve(model, value)`` fires whenever it improves. ``max_steps``
    (when > 0) stops training early. Raises :class:`TrainingDiverged` on a
    non-finite loss.
    """
    cfg = model.config
    opt = Adam(model.named_parameters(), lr=lr, decay=decay, decay_every=decay_every)
    rng = np.random.default_rng(seed)
    result = TrainResult(steps=0, best_metric=None)

    def emit(line):
        result.log_lines.append(line)
        if log_line is not None:
            log_line(line)

    for epoch in range(epochs):
        for chunk in iterate_batches(samples, batch_size, rng):
            batch = make_batch(chunk, vocab, cfg.max_turns, cfg.max_len, pad_to_longest=True)
            opt.zero_grad()
            loss = model.loss(batch)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(f"loss became {value} at step {opt.steps_taken + 1} (epoch {epoch + 1})")
            backward(loss)
            rate = opt.step()
            result.steps = opt.steps_taken
            emit(f"step={result.steps} epoch={epoch + 1} loss={value:.6f} lr={rate:.6g}")
            if max_steps and result.steps >= max_steps:
                break
        record = {"epoch": epoch + 1, "steps": result.steps}
        if valid_groups:
            report, _ = evaluate(model, valid_groups, vocab)
            key = valid_metric or f"R{len(valid_groups[0])}@1"
            record[key] = report.values.get(key, float("nan"))
            emit(f"epoch={epoch + 1} valid {key}={record[key]:.4f}")
            if result.best_metric is None or record[key] > result.best_metric:
                result.best_metric = record[key]
                if on_improve is not None:
                    on_improve(model, record[key])
        result.history.append(record)
        if max_steps and result.steps >= max_steps:
            break
    return result
