import struct

import numpy as np
import pytest

from s2m.checkpoint import MAGIC, load_checkpoint, read_checkpoint, save_checkpoint
from s2m.errors import DataError

from conftest import batch_for, random_sample, small_model


@pytest.mark.parametrize("strategy", ["pure", "i1", "i2", "i3"])
def test_round_trip_preserves_scores(tmp_path, vocab, strategy):
    m = small_model(vocab, integration=strategy, pooling="gru")
    save_checkpoint(tmp_path / "m.ckpt", m)
    m2 = load_checkpoint(tmp_path / "m.ckpt")
    assert m2.config == m.config
    for name, t in m.state().items():
        np.testing.assert_array_equal(t.data, m2.state()[name].data)
    batch = batch_for(m, [random_sample(np.random.default_rng(0)) for _ in range(3)], vocab)
    np.testing.assert_array_equal(m.score(batch)[0], m2.score(batch)[0])


def test_layout_header(tmp_path, vocab):
    save_checkpoint(tmp_path / "m", small_model(vocab))
    buf = (tmp_path / "m").read_bytes()
    assert buf[:4] == MAGIC
    (n,) = struct.unpack("<I", buf[4:8])
    assert b"integration = pure" in buf[8:8 + n]


def test_save_is_bytewise_stable(tmp_path, vocab):
    m = small_model(vocab)
    save_checkpoint(tmp_path / "a", m)
    save_checkpoint(tmp_path / "b", load_checkpoint(tmp_path / "a"))
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_bad_magic(tmp_path):
    (tmp_path / "x").write_bytes(b"NOPE" + b"\0" * 8)
    with pytest.raises(DataError, match="magic"):
        read_checkpoint(tmp_path / "x")


def test_truncated(tmp_path, vocab):
    save_checkpoint(tmp_path / "m", small_model(vocab))
    buf = (tmp_path / "m").read_bytes()
    (tmp_path / "t").write_bytes(buf[:-10])
    with pytest.raises(DataError, match="truncated"):
        read_checkpoint(tmp_path / "t")


def test_shape_validation(tmp_path, vocab):
    save_checkpoint(tmp_path / "m", small_model(vocab))
    buf = (tmp_path / "m").read_bytes().replace(b"stacks = 2", b"stacks = 3")
    (tmp_path / "x").write_bytes(buf)
    with pytest.raises(DataError, match="do not match"):
        load_checkpoint(tmp_path / "x")
    buf = (tmp_path / "m").read_bytes().replace(b"pooling = max", b"pooling = gru")
    (tmp_path / "y").write_bytes(buf)
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "y")


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="missing.ckpt"):
        read_checkpoint(tmp_path / "missing.ckpt")
