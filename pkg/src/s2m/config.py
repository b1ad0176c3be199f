"""Run configuration: defaults < ``key = value`` config file < command-line flags."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    learning_rate: float = 5e-4
    decay: float = 0.9
    decay_every: int = 5000
    batch_size: int = 20
    epochs: int = 2
    max_steps: int = 0
    seed: int = 0
    min_count: int = 1
    freeze_embeddings: bool = True
    train: str | None = None
    valid: str | None = None
    test: str | None = None
    embeddings: str | None = None
    vocab: str | None = None
    checkpoint: str | None = None
    log: str | None = None
    report: str | None = None
    valid_group_size: int = 2
    test_group_size: int = 10
    session_ids: bool = False
    workers: int = 1
    precision: str = "32"
    scores: str | None = None
    # keys set by a config file or flag rather than left at their defaults
    explicit: frozenset = field(default_factory=frozenset, compare=False)

    def validate(self) -> "RunConfig":
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.epochs < 0 or self.max_steps < 0:
            raise ConfigError("epochs and max_steps must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.precision not in ("32", "64"):
            raise ConfigError("precision must be 32 or 64")
        self.model.validate()
        return self


# config keys that are spelled differently from the dataclass fields
ALIASES = {
    "integration_strategy": "integration",
    "self_rep": "self_rep_kind",
    "lr": "learning_rate",
    "stack": "stacks",
}


def _coerce(name, typ, raw):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ.startswith("bool"):
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ.startswith("int"):
            return int(raw)
        if typ.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return str(raw).strip()


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def build_run_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, then ``file_values``, then non-None ``overrides``."""
    model_fields = {f.name: f.type for f in fields(ModelConfig)}
    run_fields = {f.name: f.type for f in fields(RunConfig) if f.name not in ("model", "explicit")}
    model_values, run_values = {}, {}
    for source in (file_values or {}, {k: v for k, v in (overrides or {}).items() if v is not None}):
        for key, value in source.items():
            key = ALIASES.get(key, key)
            if key in model_fields:
                model_values[key] = _coerce(key, model_fields[key], value)
            elif key in run_fields:
                run_values[key] = _coerce(key, run_fields[key], value)
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
    explicit = frozenset(model_values) | frozenset(run_values)
    return RunConfig(model=ModelConfig(**model_values), explicit=explicit, **run_values)
