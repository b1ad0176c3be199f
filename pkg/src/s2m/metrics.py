"""Ranking metrics over per-context candidate lists: R_n@k, MAP, MRR, P@1."""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_KS = (1, 2, 5)


@dataclass
class EvalSession:
    session_id: str
    candidates: list[tuple[float, int]]

    @property
    def n(self) -> int:
        return len(self.candidates)

    @property
    def positives(self) -> int:
        return sum(1 for _, y in self.candidates if y)

    def ranked_labels(self) -> np.ndarray:
        """Labels in descending score order; ties keep input order."""
        scores = np.array([s for s, _ in self.candidates], dtype=np.float64)
        labels = np.array([y for _, y in self.candidates], dtype=np.int64)
        return labels[np.argsort(-scores, kind="stable")]


def _require_positive(session):
    if session.positives == 0:
        raise ValueError(f"session {session.session_id!r} has no positive candidate")


def recall_at_k(session: EvalSession, k: int) -> float:
    if not 1 <= k <= session.n:
        raise ValueError(f"k={k} outside [1, {session.n}]")
    _require_positive(session)
    ranked = session.ranked_labels()
    return float(ranked[:k].sum() / ranked.sum())


def average_precision(session: EvalSession) -> float:
    _require_positive(session)
    ranked = session.ranked_labels()
    hits = np.flatnonzero(ranked)
    # exact rational sum, rounded once
    total = sum(Fraction(i + 1, int(pos) + 1) for i, pos in enumerate(hits))
    return float(total / len(hits))


def reciprocal_rank(session: EvalSession) -> float:
    _require_positive(session)
    return 1.0 / (int(np.argmax(session.ranked_labels())) + 1)


def precision_at_1(session: EvalSession) -> float:
    _require_positive(session)
    return float(session.ranked_labels()[0])


@dataclass
class MetricReport:
    values: dict[str, float]
    sessions: int
    skipped: int = 0
    buckets: dict[int, dict[str, float]] = field(default_factory=dict)
    bucket_sizes: dict[int, int] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def to_text(self) -> str:
        names = list(self.values)
        lines = [f"sessions: {self.sessions} (skipped without positives: {self.skipped})",
                 "  ".join(f"{n:>8}" for n in ["turns"] + names)]
        lines.append("  ".join(f"{v:>8}" for v in ["all"] + [f"{self.values[n]:.4f}" for n in names]))
        for turns in sorted(self.buckets):
            row = self.buckets[turns]
            lines.append("  ".join(f"{v:>8}" for v in [str(turns)] +
                                   [f"{row[n]:.4f}" if n in row else "-" for n in names]))
        return "\n".join(lines)

    def to_key_values(self) -> str:
        """``metric.bucket = value`` lines; bucket is ``all`` or a turn count."""
        lines = [f"sessions.all = {self.sessions}", f"skipped.all = {self.skipped}"]
        lines += [f"{n}.all = {v:.6f}" for n, v in self.values.items()]
        for turns in sorted(self.buckets):
            lines.append(f"sessions.{turns} = {self.bucket_sizes[turns]}")
            lines += [f"{n}.{turns} = {v:.6f}" for n, v in self.buckets[turns].items()]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_key_values(), encoding="utf-8")


def session_metrics(session: EvalSession, ks=DEFAULT_KS) -> dict[str, float]:
    out = {}
    for k in ks:
        if k <= session.n:
            out[f"R{session.n}@{k}"] = recall_at_k(session, k)
    out["MAP"] = average_precision(session)
    out["MRR"] = reciprocal_rank(session)
    out["P@1"] = precision_at_1(session)
    return out


def _mean_rows(rows: list[dict[str, float]]) -> dict[str, float]:
    keys = list(dict.fromkeys(k for r in rows for k in r))
    out = {}
    for k in keys:
        vals = [r[k] for r in rows if k in r]
        out[k] = math.fsum(vals) / len(vals)
    return out


def aggregate(sessions: Sequence[EvalSession], turn_counts: Sequence[int] | None = None,
              ks=DEFAULT_KS) -> MetricReport:
    """Mean metrics over sessions with at least one positive, overall and per turn count."""
    rows, grouped = [], collections.defaultdict(list)
    skipped = 0
    for i, s in enumerate(sessions):
        if s.positives == 0:
            skipped += 1
            continue
        row = session_metrics(s, ks)
        rows.append(row)
        if turn_counts is not None:
            grouped[int(turn_counts[i])].append(row)
    return MetricReport(
        values=_mean_rows(rows) if rows else {},
        sessions=len(rows),
        skipped=skipped,
        buckets={t: _mean_rows(r) for t, r in grouped.items()},
        bucket_sizes={t: len(r) for t, r in grouped.items()},
    )
