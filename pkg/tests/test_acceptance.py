"""Acceptance criteria for the matching model.

Each test records one PASS/FAIL line, printed in the "acceptance criteria"
section of the pytest summary.
"""

import math
import time

import numpy as np
import pytest

from s2m import layers as nn, tensor as T
from s2m.checkpoint import save_checkpoint
from s2m.data import DialogueSample, build_vocabulary, random_embeddings
from s2m.integration import STRATEGIES
from s2m.metrics import EvalSession, average_precision, reciprocal_rank, session_metrics
from s2m.model import ModelConfig, S2M
from s2m.synthetic import confusable_corpus, rule_corpus
from s2m.training import evaluate, group_consecutive, train
from s2m.verify import TOLERANCE, covering_matrix, grad_check

from conftest import batch_for, random_sample, record_acceptance, small_model
from test_metrics import oracle_metrics, random_sessions
from test_model import zero_scorers


class _Reached(Exception):
    pass


def test_gradient_integrity():
    start = time.perf_counter()
    reports = [grad_check(*combo) for combo in covering_matrix()]
    seconds = time.perf_counter() - start
    worst = max(reports, key=lambda r: r.max_error)
    kinds = {r.label.split()[1] for r in reports}
    ok = all(r.passed for r in reports) and seconds < 300
    record_acceptance("gradient integrity", ok,
                      f"{len(reports)} configs, {len(kinds)} self kinds, max rel err {worst.max_error:.2e} "
                      f"({worst.label}), {seconds:.0f}s")
    assert worst.max_error < TOLERANCE
    assert seconds < 300


def test_attention_normalization():
    rng = np.random.default_rng(0)
    worst_sum, worst_masked = 0.0, 0.0
    for _ in range(1000):
        B, Q, K = (int(v) for v in rng.integers(1, 6, 3))
        logits = rng.normal(scale=float(rng.choice([1.0, 10.0, 100.0])), size=(B, Q, K))
        mask = rng.random((B, Q, K)) < 0.6
        mask[..., int(rng.integers(K))] = True
        w = nn.softmax_rows(T.tensor(logits), mask).data
        worst_sum = max(worst_sum, float(np.abs(w.sum(-1) - 1).max()))
        if (~mask).any():
            worst_masked = max(worst_masked, float(w[~mask].max()))
    ok = worst_sum <= 1e-6 and worst_masked < 1e-30
    record_acceptance("attention normalization", ok,
                      f"max |row sum - 1| {worst_sum:.1e}, max masked weight {worst_masked:.1e}")
    assert ok


def perturb_padding(batch, vocab_size, rng):
    noisy = type(batch)(**vars(batch))
    turn = np.asarray(batch.turn_mask, bool)
    u_mask = np.asarray(batch.utterance_mask, bool)
    real = turn[..., None] & u_mask
    noisy.utterances = np.where(real, batch.utterances, rng.integers(2, vocab_size, batch.utterances.shape))
    noisy.utterance_mask = np.where(turn[..., None], u_mask, rng.random(u_mask.shape) < 0.5)
    noisy.responses = np.where(batch.response_mask, batch.responses,
                               rng.integers(2, vocab_size, batch.responses.shape))
    return noisy


def test_padding_invariance(vocab):
    rng = np.random.default_rng(0)
    samples = [random_sample(rng) for _ in range(100)]
    worst = {}
    for strategy in STRATEGIES:
        for pooling in ("max", "mean", "gru"):
            m = small_model(vocab, seed=1, integration=strategy, pooling=pooling)
            batch = batch_for(m, samples, vocab)
            base = m.score(batch)[0]
            m.embedding.data[0] = rng.normal(size=m.config.embed_dim) * 10
            moved = m.score(perturb_padding(batch, len(vocab), rng))[0]
            worst[(strategy, pooling)] = float(np.abs(base - moved).max())
    exact = max(v for (s, p), v in worst.items() if p != "gru")
    gru = max(v for (s, p), v in worst.items() if p == "gru")
    ok = exact == 0.0 and gru < 1e-5
    record_acceptance("padding invariance", ok, f"100 contexts x 12 models, max/mean max diff {exact:g}, "
                                                f"gru max diff {gru:g}")
    assert ok


def test_metric_oracle_equivalence():
    sessions, _ = random_sessions(np.random.default_rng(7), 10_000)
    mismatches = sum(session_metrics(s) != oracle_metrics(s.candidates) for s in sessions if s.positives)
    ap = average_precision(EvalSession("a", [(4, 0), (3, 1), (2, 0), (1, 1)]))
    rr = reciprocal_rank(EvalSession("b", [(3, 0), (2, 0), (1, 1)]))
    ok = mismatches == 0 and ap == 0.5 and rr == 1 / 3
    record_acceptance("metric oracle equivalence", ok, f"{mismatches} mismatches in 10000 sessions, "
                                                       f"AP {ap}, MRR {rr:.6f}")
    assert ok


def test_overfit_run():
    samples = rule_corpus(100, seed=0)
    assert len(samples) == 200
    vocab = build_vocabulary(samples)
    cfg = ModelConfig(stacks=2, embed_dim=32, hidden_size=32)
    model = S2M(cfg, random_embeddings(len(vocab), 32, np.random.default_rng(0)), seed=0)
    groups = group_consecutive(samples, 2)
    best = {}

    def stop_when_fit(m, value):
        best["value"] = value
        if value >= 0.95:
            raise _Reached

    start = time.perf_counter()
    with pytest.raises(_Reached):
        train(model, samples, vocab, epochs=200, lr=5e-4, seed=0, valid_groups=groups,
              on_improve=stop_when_fit, log_line=lambda line: best.__setitem__("line", line))
    seconds = time.perf_counter() - start
    epoch = int(best["line"].split()[0].split("=")[1])
    ok = best["value"] >= 0.95 and epoch <= 200 and seconds < 600
    record_acceptance("overfit run", ok, f"R2@1 {best['value']:.3f} at epoch {epoch}, {seconds:.0f}s")
    assert ok


def keyword_overlap_baseline(groups):
    sessions = []
    for i, group in enumerate(groups):
        last = set(group[0].context[-1])
        sessions.append(EvalSession(str(i), [(len(last & set(s.response)), s.label) for s in group]))
    return float(np.mean([session_metrics(s)["R10@1"] for s in sessions]))


def test_discrimination_run():
    train_s, test_s = confusable_corpus(n_train=2000, n_test=200, seed=0)
    vocab = build_vocabulary(train_s)
    cfg = ModelConfig(stacks=2, embed_dim=32, hidden_size=32)
    model = S2M(cfg, random_embeddings(len(vocab), 32, np.random.default_rng(0)), seed=0)
    start = time.perf_counter()
    train(model, train_s, vocab, epochs=5, lr=1e-3, seed=0)
    groups = group_consecutive(test_s, 10)
    report, _ = evaluate(model, groups, vocab)
    seconds = time.perf_counter() - start
    r = report["R10@1"]
    overlap = keyword_overlap_baseline(groups)
    ok = r >= 0.6
    record_acceptance("discrimination run", ok, f"R10@1 {r:.3f} (random 0.1, keyword overlap {overlap:.3f}), "
                                                f"{seconds:.0f}s")
    assert ok


def test_stack_additivity(vocab):
    rng = np.random.default_rng(3)
    samples = [random_sample(rng) for _ in range(50)]
    worst = 0.0
    exact = True
    for strategy in STRATEGIES:
        m = small_model(vocab, seed=2, integration=strategy, stacks=3)
        batch = batch_for(m, samples, vocab)
        g, per_stack = m.score(batch)
        total = m.forward(batch).total().data
        exact &= np.array_equal(g, per_stack.sum(axis=1))
        reference = np.array([math.fsum(map(float, row)) for row in per_stack])
        bound = per_stack.shape[1] * np.finfo(g.dtype).eps * np.abs(reference)
        worst = max(worst, float((np.abs(g - reference) / bound).max()))
        worst = max(worst, float((np.abs(total - reference) / bound).max()))
    single = small_model(vocab, seed=2, stacks=1)
    g1, p1 = single.score(batch_for(single, samples, vocab))
    ok = exact and worst <= 1.0 and np.array_equal(g1, p1[:, 0])
    record_acceptance("stack additivity", ok,
                      f"g vs exact sum within {worst:.2f} of the rounding bound, L=1 g == g1 bitwise")
    assert ok


def test_ablation_wiring(vocab):
    rng = np.random.default_rng(4)
    differing = 0
    for kind in ("cnn", "gru", "attention"):
        m = small_model(vocab, seed=5, cross_rep_enabled=False, self_rep_kind=kind)
        for _ in range(20):
            s = random_sample(rng)
            other = DialogueSample(s.label, s.context, random_sample(rng).response)
            a = m.forward(batch_for(m, [s], vocab), trace=True).trace["sent_blocks"]
            b = m.forward(batch_for(m, [other], vocab), trace=True).trace["sent_blocks"]
            for x, y in zip(a, b):
                differing += not np.array_equal(x.U_fused.data, y.U_fused.data)
                differing += not np.array_equal(x.U_next.data, y.U_next.data)
    ok = differing == 0
    record_acceptance("ablation wiring", ok, f"{differing} utterance tensors differ across responses "
                                             "(60 context pairs, 3 self kinds)")
    assert ok


def test_determinism(tmp_path):
    samples = rule_corpus(100, seed=1)
    vocab = build_vocabulary(samples)
    blobs = []
    for run in range(2):
        cfg = ModelConfig(stacks=2, embed_dim=16, hidden_size=16)
        model = S2M(cfg, random_embeddings(len(vocab), 16, np.random.default_rng(3)), seed=3)
        result = train(model, samples, vocab, epochs=1000, max_steps=500, lr=1e-3, seed=3)
        assert result.steps == 500
        save_checkpoint(tmp_path / f"{run}.ckpt", model)
        blobs.append((tmp_path / f"{run}.ckpt").read_bytes())
    ok = blobs[0] == blobs[1]
    record_acceptance("determinism", ok, f"500 steps twice, checkpoints of {len(blobs[0])} bytes identical")
    assert ok


def test_loss_closed_form(vocab):
    m = small_model(vocab, stacks=7)
    zero_scorers(m)
    batch = batch_for(m, [random_sample(np.random.default_rng(2), label=1)], vocab)
    g, per_stack = m.score(batch)
    loss = float(m.loss(batch).data)
    err = abs(loss - 7 * math.log(2))
    ok = err < 1e-6 and np.all(per_stack == 0.5)
    record_acceptance("loss closed form", ok, f"|loss - 7 ln 2| = {err:.1e} ({m.embedding.dtype} scoring)")
    assert ok
