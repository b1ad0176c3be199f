"""Semantic representation block, sentence matching and turn aggregation.

Shapes: K utterance/response pairs (one per real context turn), Tu / Tr
tokens, width h. Masks are boolean numpy arrays; padded positions of every
block input and output are held at exactly zero so that no padded content
can leak into a real position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as nn
from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor

SELF_REP_KINDS = ("cnn", "gru", "attention")


@dataclass
class BlockOutput:
    U_self: Tensor | None
    R_self: Tensor | None
    U_cross: Tensor | None
    R_cross: Tensor | None
    U_fused: Tensor
    R_fused: Tensor
    U_next: Tensor
    R_next: Tensor


def init_block(rng, cfg, *, self_rep=True, cross_rep=True, matching_width=None):
    """Parameters of one block. ``matching_width`` adds the matching network H
    (input width -> h); word-channel blocks leave it out."""
    h, k = cfg.hidden_size, cfg.kernel_size
    p = {}
    if self_rep:
        if cfg.self_rep_kind == "cnn":
            p["conv"] = nn.conv1d_params(rng, h, k, h)
        elif cfg.self_rep_kind == "gru":
            p["self_gru"] = nn.gru_params(rng, h, h)
        elif cfg.self_rep_kind == "attention":
            p["self_att"] = {"Wq": nn.glorot(rng, h, h), "Wk": nn.glorot(rng, h, h)}
        else:
            raise ConfigError(f"unknown self-representation kind {cfg.self_rep_kind!r}")
        p["G1"] = nn.linear_params(rng, 4 * h, h)
    if cross_rep:
        p["F1"] = nn.linear_params(rng, h, h)
        p["F2"] = nn.linear_params(rng, h, h)
        p["G2"] = nn.linear_params(rng, 4 * h, h)
    p["G"] = nn.linear_params(rng, h * (int(self_rep) + int(cross_rep)), h)
    p["ln"] = nn.layer_norm_params(h)
    if cfg.pooling == "gru":
        p["pool_gru"] = nn.gru_params(rng, h, h)
    if matching_width:
        p["H"] = nn.linear_params(rng, matching_width, h)
    return p


def self_representation(X, mask, p, kind="cnn") -> Tensor:
    """Intra-sentence contextualisation of X (K, T, d) -> (K, T, s)."""
    if kind == "cnn":
        return nn.conv1d(X, p["conv"]["W"], p["conv"]["b"])
    if kind == "gru":
        states, _ = nn.gru_sequence(X, mask, p["self_gru"])
        return states
    if kind == "attention":
        q = T.matmul(X, p["self_att"]["Wq"])
        k = T.matmul(X, p["self_att"]["Wk"])
        return nn.attention(q, k, X, mask)
    raise ConfigError(f"unknown self-representation kind {kind!r}")


def cross_representation(U, R, F1, F2, u_mask, r_mask):
    """Each side attends over the other; projections shape the logits only,
    the attended values are the raw representations."""
    qu = nn.feed_forward(U, F1["W"], F1["b"], "identity")
    qr = nn.feed_forward(R, F2["W"], F2["b"], "identity")
    U_hat = nn.attention(qu, qr, R, r_mask)
    R_hat = nn.attention(qr, qu, U, u_mask)
    return U_hat, R_hat


def fuse(X, X_self, X_cross, p) -> Tensor:
    """G([G1([X, Xs, X-Xs, X*Xs]), G2([X, Xc, X-Xc, X*Xc])]); a missing branch is dropped."""
    parts = []
    for rep, name in ((X_self, "G1"), (X_cross, "G2")):
        if rep is None:
            continue
        if rep.shape[:-1] != X.shape[:-1]:
            raise ShapeError(f"fusion inputs not aligned: {X.shape} vs {rep.shape}")
        parts.append(nn.feed_forward(nn.interaction(X, rep), p[name]["W"], p[name]["b"]))
    if not parts:
        raise ConfigError("fusion needs at least one of self/cross representation")
    joined = parts[0] if len(parts) == 1 else T.concat(parts, axis=-1)
    return nn.feed_forward(joined, p["G"]["W"], p["G"]["b"])


def block_transition(X_fused, X_prev, E, ln, mask=None) -> Tensor:
    """layer_norm(fused + residual + direct embedding connection)."""
    out = nn.layer_norm(X_fused + X_prev + E, ln["gain"], ln["offset"])
    return out if mask is None else nn.mask_rows(out, mask)


def semantic_block(p, U, R, E_u, E_r, u_mask, r_mask, kind="cnn",
                   self_rep=True, cross_rep=True) -> BlockOutput:
    U_self = R_self = U_cross = R_cross = None
    if self_rep:
        U_self = self_representation(U, u_mask, p, kind)
        R_self = self_representation(R, r_mask, p, kind)
    if cross_rep:
        U_cross, R_cross = cross_representation(U, R, p["F1"], p["F2"], u_mask, r_mask)
    U_fused = nn.mask_rows(fuse(U, U_self, U_cross, p), u_mask)
    R_fused = nn.mask_rows(fuse(R, R_self, R_cross, p), r_mask)
    return BlockOutput(
        U_self, R_self, U_cross, R_cross, U_fused, R_fused,
        block_transition(U_fused, U, E_u, p["ln"], u_mask),
        block_transition(R_fused, R, E_r, p["ln"], r_mask),
    )


def sentence_vectors(U_fused, R_fused, u_mask, r_mask, pooling, pool_gru=None):
    return (nn.pool(U_fused, u_mask, pooling, pool_gru),
            nn.pool(R_fused, r_mask, pooling, pool_gru))


def match(U_fused, R_fused, u_mask, r_mask, H, pooling="max", pool_gru=None) -> Tensor:
    """Matching feature m = H([v_u, v_r, v_u - v_r, v_u * v_r]) from pooled sentence vectors."""
    v_u, v_r = sentence_vectors(U_fused, R_fused, u_mask, r_mask, pooling, pool_gru)
    return nn.feed_forward(nn.interaction(v_u, v_r), H["W"], H["b"])


def init_head(rng, n_in, hidden):
    return {"gru": nn.gru_params(rng, n_in, hidden),
            "W": nn.glorot(rng, hidden, 1),
            "b": T.parameter(np.zeros(1))}


def aggregate_stack(features, turn_mask, head) -> Tensor:
    """Run the stack's GRU over real turns only and score the final state.

    features: (B, N, f) Tensor; turn_mask: (B, N). Returns g in (0, 1), shape (B,).
    """
    turn_mask = np.asarray(turn_mask, dtype=bool)
    if not np.all(turn_mask.any(axis=1)):
        raise ShapeError("every context needs at least one real turn")
    _, final = nn.gru_sequence(features, turn_mask, head["gru"])
    logit = T.matmul(final, head["W"]) + head["b"]
    return T.sigmoid(T.reshape(logit, (-1,)))


def scatter_turns(rows_features, row_index, n_samples, n_turns) -> Tensor:
    """Place per-pair features (K, f) into a (B, N, f) grid; empty slots get zeros.

    row_index (B, N) holds the pair row for each real turn and K for padding.
    """
    f = rows_features.shape[-1]
    padded = T.concat([rows_features, T.Tensor(np.zeros((1, f), dtype=rows_features.dtype))], axis=0)
    return T.take_rows(padded, row_index.reshape(n_samples, n_turns))


@dataclass
class PairInputs:
    """Embedded (utterance, response) pairs of a batch, one row per real turn."""

    E_u: Tensor
    E_r: Tensor
    u_mask: np.ndarray
    r_mask: np.ndarray
    turn_mask: np.ndarray
    row_index: np.ndarray
    n_samples: int
    n_turns: int

    def to_grid(self, features) -> Tensor:
        return scatter_turns(features, self.row_index, self.n_samples, self.n_turns)
