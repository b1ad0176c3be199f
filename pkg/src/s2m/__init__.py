"""Sequential sentence matching (S2M) for multi-turn response selection, on a numpy autodiff core."""

from .config import RunConfig, build_run_config, read_config_file
from .data import (Batch, DialogueSample, EmbeddingTable, Vocabulary, build_vocabulary, load_embeddings,
                   make_batch, random_embeddings, read_corpus, write_corpus)
from .errors import ConfigError, DataError, InvalidMaskError, S2MError, ShapeError, TrainingDiverged
from .metrics import EvalSession, MetricReport, aggregate, session_metrics
from .model import ModelConfig, S2M
from .checkpoint import load_checkpoint, save_checkpoint
from .tensor import PrecisionMode, Tensor, backward, no_grad, precision
from .training import evaluate, train

__all__ = [
    "Batch", "ConfigError", "DataError", "DialogueSample", "EmbeddingTable", "EvalSession",
    "InvalidMaskError", "MetricReport", "ModelConfig", "PrecisionMode", "RunConfig", "S2M", "S2MError",
    "ShapeError", "Tensor", "TrainingDiverged", "Vocabulary", "aggregate", "backward", "build_run_config",
    "build_vocabulary", "evaluate", "load_checkpoint", "load_embeddings", "make_batch", "no_grad",
    "precision", "random_embeddings", "read_config_file", "read_corpus", "save_checkpoint",
    "session_metrics", "train", "write_corpus",
]
