"""R10@1 / MRR for each integration strategy on the same confusable corpus and seed."""

import argparse
import time

import numpy as np

from s2m.data import build_vocabulary, random_embeddings
from s2m.integration import STRATEGIES
from s2m.model import ModelConfig, S2M
from s2m.synthetic import confusable_corpus
from s2m.training import evaluate, group_consecutive, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train-sessions", type=int, default=2000)
    ap.add_argument("--test-sessions", type=int, default=200)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--stacks", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    train_s, test_s = confusable_corpus(args.train_sessions, args.test_sessions, seed=args.seed)
    groups = group_consecutive(test_s, 10)
    vocab = build_vocabulary(train_s)
    print(f"{'strategy':<10}{'R10@1':>8}{'MRR':>8}{'seconds':>9}")
    for strategy in STRATEGIES:
        cfg = ModelConfig(stacks=args.stacks, embed_dim=args.dim, hidden_size=args.dim, integration=strategy)
        table = random_embeddings(len(vocab), args.dim, np.random.default_rng(args.seed))
        model = S2M(cfg, table, seed=args.seed)
        start = time.perf_counter()
        train(model, train_s, vocab, epochs=args.epochs, lr=args.lr, seed=args.seed)
        report, _ = evaluate(model, groups, vocab)
        print(f"{strategy:<10}{report['R10@1']:>8.3f}{report['MRR']:>8.3f}{time.perf_counter() - start:>9.0f}")


if __name__ == "__main__":
    main()
