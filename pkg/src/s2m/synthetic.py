"""Rule-generated dialogue corpora for desk-scale functional runs.

``rule_corpus``: each context's correct response is a deterministic
function of its last utterance; negatives are responses borrowed from other
contexts. Consecutive (positive, negative) lines form 2-candidate sessions.

``confusable_corpus``: the last utterance asks one of several intents about
a keyword. The correct response carries the intent's answer marker and the
same keyword. Negatives reuse context keywords (same keyword with another
answer marker, or the right marker with a keyword from an earlier turn), so
keyword overlap alone cannot pick the answer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DialogueSample


def _words(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


def rule_corpus(n_contexts=100, seed=0, vocab_size=40, max_turns=3):
    """2 * n_contexts samples: (positive, negative) per context, in that order."""
    rng = np.random.default_rng(seed)
    words = _words("t", vocab_size)
    partner = {w: words[(i * 7 + 3) % vocab_size] for i, w in enumerate(words)}

    def utt(n):
        return [str(w) for w in rng.choice(words, size=n)]

    contexts, positives = [], []
    for _ in range(n_contexts):
        ctx = [utt(int(rng.integers(3, 7))) for _ in range(int(rng.integers(1, max_turns + 1)))]
        contexts.append(ctx)
        positives.append([partner[w] for w in ctx[-1][:4]])
    shift = rng.permutation(n_contexts)
    samples = []
    for i, ctx in enumerate(contexts):
        j = shift[i] if shift[i] != i else (i + 1) % n_contexts
        samples.append(DialogueSample(1, ctx, positives[i]))
        samples.append(DialogueSample(0, ctx, positives[j]))
    return samples


@dataclass
class ConfusableWorld:
    intents: list[str]
    answers: list[str]
    keywords: list[str]
    fillers: list[str]


def make_world(n_intents=6, n_keywords=40, n_fillers=60) -> ConfusableWorld:
    return ConfusableWorld(_words("ask", n_intents), _words("ans", n_intents),
                           _words("kw", n_keywords), _words("f", n_fillers))


def _sentence(rng, core, world, lo=2, hi=5):
    tokens = list(core) + [str(w) for w in rng.choice(world.fillers, size=int(rng.integers(lo, hi + 1)))]
    rng.shuffle(tokens)
    return tokens


def confusable_session(rng, world: ConfusableWorld, negatives=9, min_turns=2, max_turns=4):
    """(context, positive response, [negative responses])."""
    n_turns = int(rng.integers(min_turns, max_turns + 1))
    kws = [str(k) for k in rng.choice(world.keywords, size=n_turns, replace=False)]
    intent = int(rng.integers(len(world.intents)))
    context = [_sentence(rng, [kws[t]], world) for t in range(n_turns - 1)]
    context.append(_sentence(rng, [world.intents[intent], kws[-1]], world))
    positive = _sentence(rng, [world.answers[intent], kws[-1]], world, 1, 4)
    others = [a for i, a in enumerate(world.answers) if i != intent]
    negs = []
    for n in range(negatives):
        if n % 3 == 2:
            # right marker, keyword from an earlier turn
            kw = kws[int(rng.integers(n_turns - 1))]
            negs.append(_sentence(rng, [world.answers[intent], kw], world, 1, 4))
        else:
            # same keyword as the question, wrong marker
            negs.append(_sentence(rng, [str(rng.choice(others)), kws[-1]], world, 1, 4))
    return context, positive, negs


def confusable_corpus(n_train=2000, n_test=200, negatives=9, train_negatives=1, seed=0,
                      world: ConfusableWorld | None = None):
    """Returns (train samples, test samples).

    Train holds, per session, the positive followed by ``train_negatives``
    randomly chosen negatives; test holds 1 + ``negatives`` consecutive lines
    per session with the positive at a random slot.
    """
    rng = np.random.default_rng(seed)
    world = world or make_world()
    train, test = [], []
    for _ in range(n_train):
        ctx, pos, negs = confusable_session(rng, world, negatives)
        train.append(DialogueSample(1, ctx, pos))
        for k in rng.choice(len(negs), size=train_negatives, replace=False):
            train.append(DialogueSample(0, ctx, negs[int(k)]))
    for _ in range(n_test):
        ctx, pos, negs = confusable_session(rng, world, negatives)
        slot = int(rng.integers(negatives + 1))
        cands = negs[:slot] + [pos] + negs[slot:]
        test.extend(DialogueSample(int(i == slot), ctx, c) for i, c in enumerate(cands))
    return train, test
