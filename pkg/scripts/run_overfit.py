"""Fit the rule corpus (held-in) and print R2@1 after every epoch."""

import argparse
import time

import numpy as np

from s2m.data import build_vocabulary, random_embeddings
from s2m.model import ModelConfig, S2M
from s2m.synthetic import rule_corpus
from s2m.training import group_consecutive, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--contexts", type=int, default=100)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--stacks", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--lr", type=float, default=5e-4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = rule_corpus(args.contexts, seed=args.seed)
    vocab = build_vocabulary(samples)
    cfg = ModelConfig(stacks=args.stacks, embed_dim=args.dim, hidden_size=args.dim)
    model = S2M(cfg, random_embeddings(len(vocab), args.dim, np.random.default_rng(args.seed)), seed=args.seed)
    start = time.perf_counter()

    def show(line):
        if "valid" in line:
            print(f"{line}  ({time.perf_counter() - start:.1f}s)", flush=True)

    train(model, samples, vocab, epochs=args.epochs, lr=args.lr, seed=args.seed,
          valid_groups=group_consecutive(samples, 2), log_line=show)


if __name__ == "__main__":
    main()
