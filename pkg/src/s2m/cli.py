"""Command-line interface: ``s2m {build-vocab,train,evaluate,rank,grad-check,synth}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, build_run_config, read_config_file
from .data import (DialogueSample, Vocabulary, build_vocabulary, load_embeddings, parse_sample_line,
                   random_embeddings, read_corpus, write_corpus)
from .errors import ConfigError, DataError, TrainingDiverged
from .model import S2M
from .training import evaluate, group_by_id, group_consecutive, score_group, train
from .verify import TOLERANCE, covering_matrix, full_matrix, grad_check

log = logging.getLogger("s2m")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p):
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--embeddings")
    p.add_argument("--vocab")
    p.add_argument("--checkpoint")
    p.add_argument("--stacks", type=int)
    p.add_argument("--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--hidden", type=int, dest="hidden_size")
    p.add_argument("--integration", choices=["pure", "i1", "i2", "i3"])
    p.add_argument("--pooling", choices=["max", "mean", "gru"])
    p.add_argument("--self-rep", choices=["cnn", "gru", "attention"], dest="self_rep_kind")
    p.add_argument("--no-cross", action="store_const", const=False, dest="cross_rep_enabled")
    p.add_argument("--no-self", action="store_const", const=False, dest="self_rep_enabled")
    p.add_argument("--max-turns", type=int, dest="max_turns")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--precision", choices=["32", "64"])


def build_parser():
    parser = _Parser(prog="s2m", description="Sequential sentence matching for response selection")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-vocab", help="write the training vocabulary, one token per line")
    _common(p)
    p.add_argument("--min-count", type=int, dest="min_count")

    p = sub.add_parser("train", help="train a model and keep the best checkpoint")
    _common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--decay", type=float)
    p.add_argument("--decay-every", type=int, dest="decay_every")
    p.add_argument("--valid-group-size", type=int, dest="valid_group_size")
    p.add_argument("--unfreeze-embeddings", action="store_const", const=False, dest="freeze_embeddings")
    p.add_argument("--log", help="per-step log file (default: <checkpoint>.log)")

    p = sub.add_parser("evaluate", help="rank grouped test candidates and report metrics")
    _common(p)
    p.add_argument("--group-size", type=int, dest="test_group_size")
    p.add_argument("--session-ids", action="store_const", const=True, dest="session_ids",
                   help="each test line starts with a session id field")
    p.add_argument("--report", help="write 'metric.bucket = value' lines here")
    p.add_argument("--scores", help="write one score per test line here")

    p = sub.add_parser("rank", help="rank candidate responses for one context")
    _common(p)
    p.add_argument("--context", required=True, help="utterances separated by '|||'")
    p.add_argument("--candidates", required=True, help="file with one candidate response per line")

    p = sub.add_parser("grad-check", help="finite-difference check of every parameter gradient")
    _common(p)
    p.add_argument("--max-entries", type=int, default=8,
                   help="coordinates sampled per tensor (0 = all)")
    p.add_argument("--full-matrix", action="store_true",
                   help="every strategy x self-rep x pooling combination")

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("kind", choices=["rule", "confusable"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sessions", type=int, default=None)
    return parser


RUN_KEYS = ("train", "valid", "test", "embeddings", "vocab", "checkpoint", "stacks", "embed_dim",
            "hidden_size", "integration", "pooling", "self_rep_kind", "cross_rep_enabled",
            "self_rep_enabled", "max_turns", "max_len", "seed", "workers", "precision", "min_count",
            "epochs", "max_steps", "batch_size", "learning_rate", "decay", "decay_every",
            "valid_group_size", "freeze_embeddings", "log", "test_group_size", "session_ids", "report",
            "scores")


def resolve_config(args) -> RunConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {k: getattr(args, k) for k in RUN_KEYS if hasattr(args, k)}
    return build_run_config(file_values, overrides).validate()


def _need(cfg, *names):
    for name in names:
        if not getattr(cfg, name):
            raise ConfigError(f"--{name} is required for this command")


# -- commands --------------------------------------------------------------

def cmd_build_vocab(cfg: RunConfig) -> int:
    _need(cfg, "train", "vocab")
    vocab = build_vocabulary(read_corpus(cfg.train), cfg.min_count)
    try:
        vocab.save(cfg.vocab)
    except OSError as exc:
        raise DataError(f"cannot write vocabulary: {exc.strerror}", cfg.vocab) from exc
    print(f"wrote {len(vocab) - 2} tokens to {cfg.vocab}")
    return EXIT_OK


def _embedding_table(cfg: RunConfig, vocab, rng):
    dim = cfg.model.embed_dim
    if cfg.embeddings:
        return load_embeddings(cfg.embeddings, vocab, dim, rng, frozen=cfg.freeze_embeddings)
    return random_embeddings(len(vocab), dim, rng, frozen=cfg.freeze_embeddings)


def cmd_train(cfg: RunConfig) -> int:
    _need(cfg, "train", "vocab", "checkpoint")
    vocab = Vocabulary.load(cfg.vocab)
    samples = read_corpus(cfg.train)
    valid_groups = None
    if cfg.valid:
        valid_groups = group_consecutive(read_corpus(cfg.valid), cfg.valid_group_size)
    rng = np.random.default_rng(cfg.seed)
    with T.precision(cfg.precision):
        model = S2M(cfg.model, _embedding_table(cfg, vocab, rng), seed=cfg.seed)
        model.cast(T.default_dtype())
        log_path = Path(cfg.log or f"{cfg.checkpoint}.log")
        with log_path.open("w", encoding="utf-8") as fh:
            def write_line(line):
                fh.write(line + "\n")
                log.debug(line)

            def keep_best(m, value):
                save_checkpoint(cfg.checkpoint, m)
                log.info("validation improved to %.4f; saved %s", value, cfg.checkpoint)

            if cfg.epochs == 0 or valid_groups is None:
                save_checkpoint(cfg.checkpoint, model)
            result = train(model, samples, vocab, epochs=cfg.epochs, batch_size=cfg.batch_size,
                           lr=cfg.learning_rate, decay=cfg.decay, decay_every=cfg.decay_every,
                           seed=cfg.seed, max_steps=cfg.max_steps, valid_groups=valid_groups,
                           on_improve=keep_best, log_line=write_line)
            if valid_groups is None:
                save_checkpoint(cfg.checkpoint, model)
    best = "" if result.best_metric is None else f", best validation {result.best_metric:.4f}"
    print(f"trained {result.steps} steps{best}; checkpoint {cfg.checkpoint}")
    return EXIT_OK


def _read_test(cfg: RunConfig):
    if not cfg.session_ids:
        samples = read_corpus(cfg.test)
        groups = group_consecutive(samples, cfg.test_group_size)
        return groups, None
    ids, samples = [], []
    try:
        lines = Path(cfg.test).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read test file: {exc.strerror}", cfg.test) from exc
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        sid, sep, rest = line.partition("\t")
        if not sep:
            raise DataError("missing session id field", cfg.test, n)
        ids.append(sid)
        samples.append(parse_sample_line(rest, n, cfg.test))
    return group_by_id(samples, ids)


def _load_model(cfg: RunConfig):
    _need(cfg, "checkpoint", "vocab")
    vocab = Vocabulary.load(cfg.vocab)
    expect = cfg.model.integration if "integration" in cfg.explicit else None
    model = load_checkpoint(cfg.checkpoint, expect_integration=expect)
    if len(model.embedding.data) != len(vocab):
        raise DataError(f"vocabulary has {len(vocab)} ids but checkpoint embeds {len(model.embedding.data)}",
                        cfg.vocab)
    if cfg.precision == "64":
        model.cast(np.float64)
    return model, vocab


def cmd_evaluate(cfg: RunConfig) -> int:
    _need(cfg, "test")
    model, vocab = _load_model(cfg)
    groups, ids = _read_test(cfg)
    report, sessions = evaluate(model, groups, vocab, workers=cfg.workers, ids=ids)
    print(report.to_text())
    if cfg.report:
        report.write(cfg.report)
    if cfg.scores:
        with open(cfg.scores, "w", encoding="utf-8") as fh:
            for s in sessions:
                for score, _ in s.candidates:
                    fh.write(f"{score!r}\n")
    return EXIT_OK


def rank_candidates(model, vocab, context: list[list[str]], candidates: list[list[str]]):
    """[(rank, g, per_stack, index)] sorted by g descending (stable)."""
    if not candidates:
        raise DataError("no candidate responses to rank")
    group = [DialogueSample(0, context, c) for c in candidates]
    g, per_stack = score_group(model, group, vocab)
    order = np.argsort(-g, kind="stable")
    return [(r + 1, float(g[i]), per_stack[i], int(i)) for r, i in enumerate(order)]


def cmd_rank(cfg: RunConfig, context_text: str, candidates_path: str) -> int:
    model, vocab = _load_model(cfg)
    context = [u.split() for u in context_text.split("|||")]
    try:
        lines = [ln.rstrip("\n") for ln in open(candidates_path, encoding="utf-8") if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read candidates: {exc.strerror}", candidates_path) from exc
    for rank, g, per_stack, i in rank_candidates(model, vocab, context, [ln.split() for ln in lines]):
        stacks = ",".join(repr(float(v)) for v in per_stack)
        print(f"{rank}\t{g!r}\t{stacks}\t{lines[i]}")
    return EXIT_OK


def cmd_grad_check(cfg: RunConfig, explicit: bool, max_entries: int, full: bool) -> int:
    if explicit:
        m = cfg.model
        combos = [(m.integration, m.self_rep_kind, m.pooling)]
    else:
        combos = full_matrix() if full else covering_matrix()
    failed = 0
    for integration, kind, pooling in combos:
        rep = grad_check(integration, kind, pooling, max_entries=max_entries or None, seed=cfg.seed,
                         self_rep_enabled=cfg.model.self_rep_enabled if explicit else True,
                         cross_rep_enabled=cfg.model.cross_rep_enabled if explicit else True)
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {rep.label} max_rel_err={rep.max_error:.2e} "
              f"worst={rep.worst.name} tensors={len(rep.checks)} ({rep.seconds:.1f}s)")
        failed += not rep.passed
    print(f"{len(combos) - failed}/{len(combos)} configurations within {TOLERANCE:g}")
    return EXIT_OK if not failed else EXIT_VERIFY


def cmd_synth(args) -> int:
    from .synthetic import confusable_corpus, rule_corpus

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "rule":
        samples = rule_corpus(args.sessions or 100, seed=args.seed)
        write_corpus(out / "train.txt", samples)
        write_corpus(out / "valid.txt", samples)
    else:
        n = args.sessions or 2000
        train_s, test_s = confusable_corpus(n_train=n, n_test=max(n // 10, 1), seed=args.seed)
        valid_s, _ = confusable_corpus(n_train=max(n // 10, 1), n_test=1, seed=args.seed + 1)
        write_corpus(out / "train.txt", train_s)
        write_corpus(out / "valid.txt", valid_s)
        write_corpus(out / "test.txt", test_s)
    print(f"wrote {args.kind} corpus to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    level = os.environ.get("S2M_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth":
            return cmd_synth(args)
        cfg = resolve_config(args)
        if args.command == "build-vocab":
            return cmd_build_vocab(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "rank":
            return cmd_rank(cfg, args.context, args.candidates)
        if args.command == "grad-check":
            explicit = bool(cfg.explicit & {"integration", "self_rep_kind", "pooling",
                                            "cross_rep_enabled", "self_rep_enabled"})
            return cmd_grad_check(cfg, explicit, args.max_entries, args.full_matrix)
    except UsageError as exc:
        print(f"s2m: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"s2m: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"s2m: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"s2m: training diverged: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
