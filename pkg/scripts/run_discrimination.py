"""Train on the confusable corpus and compare with a keyword-overlap ranker.

The overlap ranker scores each candidate by the number of tokens it shares
with the last utterance; the corpus is built so that this is near chance.
"""

import argparse
import time

import numpy as np

from s2m.data import build_vocabulary, random_embeddings
from s2m.metrics import EvalSession, aggregate
from s2m.model import ModelConfig, S2M
from s2m.synthetic import confusable_corpus
from s2m.training import evaluate, group_consecutive, train


def overlap_report(groups):
    sessions = []
    for i, group in enumerate(groups):
        last = set(group[0].context[-1])
        sessions.append(EvalSession(str(i), [(len(last & set(s.response)), s.label) for s in group]))
    return aggregate(sessions)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train-sessions", type=int, default=2000)
    ap.add_argument("--test-sessions", type=int, default=200)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--stacks", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--integration", default="pure")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    train_s, test_s = confusable_corpus(args.train_sessions, args.test_sessions, seed=args.seed)
    groups = group_consecutive(test_s, 10)
    vocab = build_vocabulary(train_s)
    cfg = ModelConfig(stacks=args.stacks, embed_dim=args.dim, hidden_size=args.dim, integration=args.integration)
    model = S2M(cfg, random_embeddings(len(vocab), args.dim, np.random.default_rng(args.seed)), seed=args.seed)
    start = time.perf_counter()
    train(model, train_s, vocab, epochs=args.epochs, lr=args.lr, seed=args.seed)
    report, _ = evaluate(model, groups, vocab)
    print(f"trained {args.epochs} epochs in {time.perf_counter() - start:.0f}s")
    print("model:           R10@1 = {:.3f}  MRR = {:.3f}".format(report["R10@1"], report["MRR"]))
    base = overlap_report(groups)
    print("keyword overlap: R10@1 = {:.3f}  MRR = {:.3f}".format(base["R10@1"], base["MRR"]))
    print("random:          R10@1 = 0.100")


if __name__ == "__main__":
    main()
