"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"S2M1"
    u32 config length, config bytes (UTF-8 ``key = value`` lines)
    u32 record count
    per record: u16 name length, name (UTF-8), u8 rank, rank x u32 dims,
                float32 payload (row-major)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import EmbeddingTable
from .errors import ConfigError, DataError
from .model import ModelConfig, S2M, flatten
from .integration import init_channels

MAGIC = b"S2M1"


def encode_config(record: dict[str, str]) -> bytes:
    return "".join(f"{k} = {v}\n" for k, v in record.items()).encode("utf-8")


def decode_config(raw: bytes) -> dict[str, str]:
    out = {}
    for line in raw.decode("utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def save_checkpoint(path, model: S2M, extra: dict[str, str] | None = None) -> None:
    record = model.config.to_record()
    record["frozen_embeddings"] = str(model.frozen_embeddings).lower()
    record.update(extra or {})
    cfg = encode_config(record)
    parts = [MAGIC, struct.pack("<I", len(cfg)), cfg]
    tensors = model.state()
    parts.append(struct.pack("<I", len(tensors)))
    for name, t in tensors.items():
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path):
    """Return (config record, {name: float32 array})."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint: {exc.strerror}", path) from exc
    if buf[:4] != MAGIC:
        raise DataError("not an S2M checkpoint (bad magic)", path)
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise DataError("truncated checkpoint", path)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    (cfg_len,) = struct.unpack("<I", take(4))
    record = decode_config(take(cfg_len))
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(buf):
        raise DataError("trailing bytes after checkpoint records", path)
    return record, arrays


def load_checkpoint(path, expect_integration: str | None = None) -> S2M:
    """Rebuild a model, validating every tensor shape against the stored config."""
    record, arrays = read_checkpoint(path)
    config = ModelConfig.from_record(record).validate()
    if expect_integration is not None and config.integration != expect_integration:
        raise ConfigError(f"checkpoint was trained with integration={config.integration}, "
                          f"refusing to load as {expect_integration}")
    if "embedding" not in arrays:
        raise DataError("checkpoint has no embedding table", path)
    frozen = record.get("frozen_embeddings", "true") == "true"
    tree = init_channels(np.random.default_rng(0), config)
    template = flatten(tree)
    missing = set(template) - set(arrays)
    unexpected = set(arrays) - set(template) - {"embedding"}
    if missing or unexpected:
        raise DataError(f"checkpoint tensors do not match config (missing {sorted(missing)[:3]}, "
                        f"unexpected {sorted(unexpected)[:3]})", path)
    for name, t in template.items():
        if t.shape != arrays[name].shape:
            raise DataError(f"tensor {name} has shape {arrays[name].shape}, config implies {t.shape}", path)
        t.data = arrays[name].astype(t.data.dtype)
    emb = arrays["embedding"]
    if emb.ndim != 2 or emb.shape[1] != config.embed_dim:
        raise DataError(f"embedding shape {emb.shape} does not match embed_dim {config.embed_dim}", path)
    return S2M(config, EmbeddingTable(emb, frozen), params=tree)
