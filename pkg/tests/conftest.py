import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from s2m import tensor as T
from s2m.data import DialogueSample, Vocabulary, make_batch, random_embeddings
from s2m.model import ModelConfig, S2M

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def record_acceptance(name, passed, detail=""):
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def f64():
    with T.precision("64"):
        yield


WORDS = [f"w{i}" for i in range(30)]


@pytest.fixture
def vocab():
    return Vocabulary(WORDS)


def random_sample(rng, label=None, max_turns=4, max_len=7):
    def utt():
        return [str(w) for w in rng.choice(WORDS, size=int(rng.integers(1, max_len + 1)))]

    label = int(rng.integers(2)) if label is None else label
    return DialogueSample(label, [utt() for _ in range(int(rng.integers(1, max_turns + 1)))], utt())


def small_model(vocab, seed=0, dim=8, **overrides):
    kw = dict(stacks=2, embed_dim=dim, hidden_size=dim, max_turns=4, max_len=8)
    kw.update(overrides)
    cfg = ModelConfig(**kw)
    table = random_embeddings(len(vocab), dim, np.random.default_rng(seed), frozen=True)
    table.matrix[1:] *= 10.0
    return S2M(cfg, table, seed=seed)


def batch_for(model, samples, vocab):
    cfg = model.config
    return make_batch(samples, vocab, cfg.max_turns, cfg.max_len)
