import numpy as np
import pytest

from s2m import cli
from s2m.data import DialogueSample, write_corpus
from s2m.metrics import EvalSession, aggregate
from s2m.model import S2M
from s2m.synthetic import confusable_corpus

SMALL = ["--stacks", "2", "--embed-dim", "8", "--hidden", "8", "--max-turns", "4", "--max-len", "8"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    train, test = confusable_corpus(n_train=40, n_test=6, seed=3)
    write_corpus(root / "train.txt", train)
    write_corpus(root / "valid.txt", test[:20])
    write_corpus(root / "test.txt", test)
    assert cli.main(["build-vocab", "--train", str(root / "train.txt"), "--vocab", str(root / "vocab.txt")]) == 0
    argv = ["train", *SMALL, "--train", str(root / "train.txt"), "--vocab", str(root / "vocab.txt"),
            "--checkpoint", str(root / "m.ckpt"), "--epochs", "1", "--batch-size", "8"]
    assert cli.main(argv) == 0
    return root


def p(root, name):
    return str(root / name)


def test_usage_error_exit_code(capsys):
    assert cli.main(["train", "--stacks", "many"]) == 1
    assert cli.main(["no-such-command"]) == 1


def test_missing_required_path_is_config_error(tmp_path):
    assert cli.main(["train", "--train", str(tmp_path / "x")]) == 1


def test_missing_file_is_data_error(tmp_path):
    argv = ["build-vocab", "--train", str(tmp_path / "missing.txt"), "--vocab", str(tmp_path / "v")]
    assert cli.main(argv) == 2


def test_build_vocab_idempotent(workspace, tmp_path):
    out = tmp_path / "v.txt"
    for _ in range(2):
        assert cli.main(["build-vocab", "--train", p(workspace, "train.txt"), "--vocab", str(out)]) == 0
        assert out.read_bytes() == (workspace / "vocab.txt").read_bytes()


def test_zero_epochs_writes_initial_checkpoint(workspace, tmp_path):
    argv = ["train", *SMALL, "--train", p(workspace, "train.txt"), "--vocab", p(workspace, "vocab.txt"),
            "--checkpoint", str(tmp_path / "z.ckpt"), "--epochs", "0"]
    assert cli.main(argv) == 0
    assert (tmp_path / "z.ckpt").stat().st_size > 0


def test_seeded_training_reproducible(workspace, tmp_path):
    logs, blobs = [], []
    for run in range(2):
        ck = tmp_path / f"r{run}.ckpt"
        argv = ["train", *SMALL, "--train", p(workspace, "train.txt"), "--vocab", p(workspace, "vocab.txt"),
                "--valid", p(workspace, "valid.txt"), "--valid-group-size", "10",
                "--checkpoint", str(ck), "--epochs", "2", "--batch-size", "8", "--seed", "5"]
        assert cli.main(argv) == 0
        logs.append((tmp_path / f"r{run}.ckpt.log").read_text())
        blobs.append(ck.read_bytes())
    assert logs[0] == logs[1] and "valid R10@1" in logs[0]
    assert blobs[0] == blobs[1]


def evaluate_argv(root, *extra):
    return ["evaluate", "--test", p(root, "test.txt"), "--vocab", p(root, "vocab.txt"),
            "--checkpoint", p(root, "m.ckpt"), *extra]


def test_evaluate_empty_file(workspace, tmp_path):
    (tmp_path / "empty.txt").write_text("")
    argv = ["evaluate", "--test", str(tmp_path / "empty.txt"), "--vocab", p(workspace, "vocab.txt"),
            "--checkpoint", p(workspace, "m.ckpt")]
    assert cli.main(argv) == 2


def test_evaluate_group_size_must_divide(workspace, capsys):
    assert cli.main(evaluate_argv(workspace, "--group-size", "7")) == 2
    assert "groups of 7" in capsys.readouterr().err


def test_evaluate_oracle_scorer(workspace, tmp_path, monkeypatch):
    def oracle(self, batch):
        g = batch.labels.astype(float)
        return g, g[:, None]

    monkeypatch.setattr(S2M, "score", oracle)
    assert cli.main(evaluate_argv(workspace, "--report", str(tmp_path / "r.txt"))) == 0
    report = dict(line.split(" = ") for line in (tmp_path / "r.txt").read_text().splitlines())
    assert report["R10@1.all"] == "1.000000" and report["MAP.all"] == "1.000000"


def test_report_matches_exported_scores(workspace, tmp_path):
    argv = evaluate_argv(workspace, "--report", str(tmp_path / "r.txt"), "--scores", str(tmp_path / "s.txt"))
    assert cli.main(argv) == 0
    scores = [float(x) for x in (tmp_path / "s.txt").read_text().split()]
    labels = [int(line.split("\t")[0]) for line in (workspace / "test.txt").read_text().splitlines()]
    assert len(scores) == len(labels) == 60
    sessions = [EvalSession(str(i), list(zip(scores[i:i + 10], labels[i:i + 10]))) for i in range(0, 60, 10)]
    expected = aggregate(sessions).values
    report = dict(line.split(" = ") for line in (tmp_path / "r.txt").read_text().splitlines())
    for key, value in expected.items():
        assert report[f"{key}.all"] == f"{value:.6f}"


def test_evaluate_with_session_ids(workspace, tmp_path):
    lines = (workspace / "test.txt").read_text().splitlines()
    (tmp_path / "ids.txt").write_text("".join(f"s{i // 10}\t{ln}\n" for i, ln in enumerate(lines)))
    argv = ["evaluate", "--test", str(tmp_path / "ids.txt"), "--session-ids", "--vocab", p(workspace, "vocab.txt"),
            "--checkpoint", p(workspace, "m.ckpt"), "--report", str(tmp_path / "a.txt")]
    assert cli.main(argv) == 0
    assert cli.main(evaluate_argv(workspace, "--report", str(tmp_path / "b.txt"))) == 0
    assert (tmp_path / "a.txt").read_text() == (tmp_path / "b.txt").read_text()


def test_evaluate_refuses_other_strategy(workspace):
    assert cli.main(evaluate_argv(workspace, "--integration", "i2")) == 1


def rank_output(root, context, candidates_path, capsys):
    code = cli.main(["rank", "--vocab", p(root, "vocab.txt"), "--checkpoint", p(root, "m.ckpt"),
                     "--context", context, "--candidates", str(candidates_path)])
    return code, [line.split("\t") for line in capsys.readouterr().out.splitlines()]


def test_rank_single_candidate(workspace, tmp_path, capsys):
    (tmp_path / "c.txt").write_text("ans1 kw3\n")
    code, rows = rank_output(workspace, "f1 kw3 ||| ask1 kw3", tmp_path / "c.txt", capsys)
    assert code == 0 and len(rows) == 1 and rows[0][0] == "1"
    assert len(rows[0][2].split(",")) == 2


def test_rank_matches_evaluate_scores(workspace, tmp_path, capsys):
    lines = (workspace / "test.txt").read_text().splitlines()[:10]
    fields = [ln.split("\t") for ln in lines]
    context = " ||| ".join(fields[0][1:-1])
    (tmp_path / "c.txt").write_text("".join(f[-1] + "\n" for f in fields))
    write_corpus(tmp_path / "one.txt", [DialogueSample(int(f[0]), [u.split() for u in f[1:-1]], f[-1].split())
                                        for f in fields])
    code, rows = rank_output(workspace, context, tmp_path / "c.txt", capsys)
    assert code == 0
    argv = ["evaluate", "--test", str(tmp_path / "one.txt"), "--vocab", p(workspace, "vocab.txt"),
            "--checkpoint", p(workspace, "m.ckpt"), "--scores", str(tmp_path / "s.txt")]
    assert cli.main(argv) == 0
    capsys.readouterr()
    scores = [float(x) for x in (tmp_path / "s.txt").read_text().split()]
    order = np.argsort(-np.array(scores), kind="stable")
    assert [int(r[0]) for r in rows] == list(range(1, 11))
    assert [r[3] for r in rows] == [fields[i][-1] for i in order]
    assert [float(r[1]) for r in rows] == [scores[i] for i in order]
    for r in rows:
        assert float(r[1]) == pytest.approx(sum(float(v) for v in r[2].split(",")), rel=1e-6)


def test_rank_empty_candidates(workspace, tmp_path, capsys):
    (tmp_path / "c.txt").write_text("\n")
    code, _ = rank_output(workspace, "a b", tmp_path / "c.txt", capsys)
    assert code == 2


def test_grad_check_explicit_config(capsys):
    assert cli.main(["grad-check", "--integration", "pure", "--pooling", "mean", "--max-entries", "4"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("PASS integration=pure self_rep=cnn pooling=mean")
    assert out[-1] == "1/1 configurations within 0.0001"


def test_synth_deterministic(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["synth", "rule", "--out", str(tmp_path / d), "--sessions", "10"]) == 0
    assert (tmp_path / "a" / "train.txt").read_bytes() == (tmp_path / "b" / "train.txt").read_bytes()
    assert len((tmp_path / "a" / "train.txt").read_text().splitlines()) == 20
