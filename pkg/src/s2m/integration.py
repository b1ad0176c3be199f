"""Word-similarity matching channel and the three ways of combining it with
sentence matching.

The word channel runs its own stack of semantic blocks (independent
parameters, same structure). At every block it builds similarity matrices
from the self- and cross-representations, convolves them with 3x3 filters,
max-pools each filter map over the valid region and projects the result to a
width-h matching feature.

Strategies:

* ``i1`` - before every block the two channels' inputs are concatenated and
  projected back to width h; that shared input feeds both channels.
* ``i2`` - the sentence channel's similarity matrices are stacked onto the
  word channel's, and the word channel's pooled fused representations are
  appended to the sentence vectors before H.
* ``i3`` - both channels' matching features are concatenated per turn and fed
  to one shared GRU head per stack.

``i1`` and ``i2`` keep an aggregation head (and loss) per channel.
"""

from __future__ import annotations

import math

import numpy as np

from . import layers as nn
from . import tensor as T
from .blocks import (PairInputs, aggregate_stack, init_block, init_head, match,
                     semantic_block, sentence_vectors)
from .tensor import Tensor

STRATEGIES = ("pure", "i1", "i2", "i3")


def similarity_matrices(U_self, R_self, U_cross, R_cross, u_mask, r_mask) -> Tensor:
    """Stack U_self R_self^T / sqrt(h) and U_cross R_cross^T / sqrt(h) -> (K, 2, Tu, Tr).

    Entries in a padded row or column are exactly zero.
    """
    scale = 1.0 / math.sqrt(U_self.shape[-1])
    valid = np.asarray(u_mask, bool)[:, :, None] & np.asarray(r_mask, bool)[:, None, :]
    channels = []
    for a, b in ((U_self, R_self), (U_cross, R_cross)):
        sim = T.matmul(a, T.swap_last(b)) * scale
        sim = T.where(valid, sim, 0.0)
        channels.append(T.reshape(sim, (sim.shape[0], 1) + sim.shape[1:]))
    return T.concat(channels, axis=1)


def init_word_feature(rng, cfg, in_channels=2):
    F = cfg.word_filters
    fan_in, fan_out = in_channels * 9, F * 9
    return {"conv": {"W": nn.glorot(rng, fan_in, fan_out, (F, in_channels, 3, 3)),
                     "b": T.parameter(np.zeros(F))},
            "proj": nn.linear_params(rng, F, cfg.hidden_size)}


def word_channel_feature(M, p, u_mask=None, r_mask=None) -> Tensor:
    """3x3 SAME conv + ReLU, global max pool per filter over the valid region,
    then affine + ReLU to width h. M is (K, C, Tu, Tr)."""
    maps = T.relu(T.conv2d_linear(M, p["conv"]["W"], p["conv"]["b"]))
    K, _, Tu, Tr = M.shape
    if u_mask is None:
        valid = np.ones((K, 1, Tu, Tr), dtype=bool)
    else:
        valid = (np.asarray(u_mask, bool)[:, None, :, None] & np.asarray(r_mask, bool)[:, None, None, :])
    pooled = T.masked_max(maps, valid, axes=(-2, -1))
    return nn.feed_forward(pooled, p["proj"]["W"], p["proj"]["b"])


# -- parameter trees -------------------------------------------------------

def init_channels(rng, cfg):
    """Parameter tree for ``cfg.integration``."""
    h, L = cfg.hidden_size, cfg.stacks
    strategy = cfg.integration
    if strategy == "pure":
        return {"sent": {
            "blocks": [init_block(rng, cfg, self_rep=cfg.self_rep_enabled,
                                  cross_rep=cfg.cross_rep_enabled, matching_width=4 * h)
                       for _ in range(L)],
            "heads": [init_head(rng, h, h) for _ in range(L)],
        }}
    h_width = 8 * h if strategy == "i2" else 4 * h
    tree = {
        "sent": {"blocks": [init_block(rng, cfg, matching_width=h_width) for _ in range(L)]},
        "word": {"blocks": [init_block(rng, cfg) for _ in range(L)],
                 "features": [init_word_feature(rng, cfg, 4 if strategy == "i2" else 2)
                              for _ in range(L)]},
    }
    if strategy == "i3":
        tree["shared_heads"] = [init_head(rng, 2 * h, h) for _ in range(L)]
    else:
        tree["sent"]["heads"] = [init_head(rng, h, h) for _ in range(L)]
        tree["word"]["heads"] = [init_head(rng, h, h) for _ in range(L)]
    if strategy == "i1":
        tree["mix"] = [nn.linear_params(rng, 2 * h, h) for _ in range(L)]
    return tree


# -- forward passes --------------------------------------------------------

def _word_feature(block_out, feature_params, x: PairInputs, extra=None):
    M = similarity_matrices(block_out.U_self, block_out.R_self, block_out.U_cross,
                            block_out.R_cross, x.u_mask, x.r_mask)
    if extra is not None:
        M = T.concat([M, extra], axis=1)
    return word_channel_feature(M, feature_params, x.u_mask, x.r_mask)


def sentence_forward(params, x: PairInputs, cfg, trace=None):
    """Pure sentence matching: one score per stack."""
    sent = params["sent"]
    U, R = x.E_u, x.E_r
    scores = []
    for l in range(cfg.stacks):
        p = sent["blocks"][l]
        out = semantic_block(p, U, R, x.E_u, x.E_r, x.u_mask, x.r_mask, cfg.self_rep_kind,
                             cfg.self_rep_enabled, cfg.cross_rep_enabled)
        m = match(out.U_fused, out.R_fused, x.u_mask, x.r_mask, p["H"], cfg.pooling, p.get("pool_gru"))
        scores.append(("sent", aggregate_stack(x.to_grid(m), x.turn_mask, sent["heads"][l])))
        if trace is not None:
            trace.setdefault("sent_blocks", []).append(out)
            trace.setdefault("sent_features", []).append(m)
        U, R = out.U_next, out.R_next
    return scores


def integrate_i1(params, x: PairInputs, cfg, trace=None):
    sent, word = params["sent"], params["word"]
    Us, Rs, Uw, Rw = x.E_u, x.E_r, x.E_u, x.E_r
    scores = []
    for l in range(cfg.stacks):
        mix = params["mix"][l]
        U_in = nn.mask_rows(nn.feed_forward(T.concat([Us, Uw], -1), mix["W"], mix["b"], "identity"), x.u_mask)
        R_in = nn.mask_rows(nn.feed_forward(T.concat([Rs, Rw], -1), mix["W"], mix["b"], "identity"), x.r_mask)
        ps, pw = sent["blocks"][l], word["blocks"][l]
        out_s = semantic_block(ps, U_in, R_in, x.E_u, x.E_r, x.u_mask, x.r_mask, cfg.self_rep_kind)
        out_w = semantic_block(pw, U_in, R_in, x.E_u, x.E_r, x.u_mask, x.r_mask, cfg.self_rep_kind)
        m_s = match(out_s.U_fused, out_s.R_fused, x.u_mask, x.r_mask, ps["H"], cfg.pooling, ps.get("pool_gru"))
        m_w = _word_feature(out_w, word["features"][l], x)
        scores.append(("sent", aggregate_stack(x.to_grid(m_s), x.turn_mask, sent["heads"][l])))
        scores.append(("word", aggregate_stack(x.to_grid(m_w), x.turn_mask, word["heads"][l])))
        if trace is not None:
            trace.setdefault("sent_features", []).append(m_s)
            trace.setdefault("word_features", []).append(m_w)
        Us, Rs, Uw, Rw = out_s.U_next, out_s.R_next, out_w.U_next, out_w.R_next
    return _order_by_channel(scores)


def integrate_i2(params, x: PairInputs, cfg, trace=None):
    sent, word = params["sent"], params["word"]
    Us, Rs, Uw, Rw = x.E_u, x.E_r, x.E_u, x.E_r
    scores = []
    for l in range(cfg.stacks):
        ps, pw = sent["blocks"][l], word["blocks"][l]
        out_s = semantic_block(ps, Us, Rs, x.E_u, x.E_r, x.u_mask, x.r_mask, cfg.self_rep_kind)
        out_w = semantic_block(pw, Uw, Rw, x.E_u, x.E_r, x.u_mask, x.r_mask, cfg.self_rep_kind)
        extra = similarity_matrices(out_s.U_self, out_s.R_self, out_s.U_cross, out_s.R_cross,
                                    x.u_mask, x.r_mask)
        m_w = _word_feature(out_w, word["features"][l], x, extra=extra)
        v_u, v_r = sentence_vectors(out_s.U_fused, out_s.R_fused, x.u_mask, x.r_mask,
                                    cfg.pooling, ps.get("pool_gru"))
        w_u, w_r = sentence_vectors(out_w.U_fused, out_w.R_fused, x.u_mask, x.r_mask,
                                    cfg.pooling, pw.get("pool_gru"))
        a, b = T.concat([v_u, w_u], -1), T.concat([v_r, w_r], -1)
        m_s = nn.feed_forward(nn.interaction(a, b), ps["H"]["W"], ps["H"]["b"])
        scores.append(("sent", aggregate_stack(x.to_grid(m_s), x.turn_mask, sent["heads"][l])))
        scores.append(("word", aggregate_stack(x.to_grid(m_w), x.turn_mask, word["heads"][l])))
        if trace is not None:
            trace.setdefault("sent_features", []).append(m_s)
            trace.setdefault("word_features", []).append(m_w)
        Us, Rs, Uw, Rw = out_s.U_next, out_s.R_next, out_w.U_next, out_w.R_next
    return _order_by_channel(scores)


def integrate_i3(params, x: PairInputs, cfg, trace=None):
    sent, word = params["sent"], params["word"]
    Us, Rs, Uw, Rw = x.E_u, x.E_r, x.E_u, x.E_r
    scores = []
    for l in range(cfg.stacks):
        ps, pw = sent["blocks"][l], word["blocks"][l]
        out_s = semantic_block(ps, Us, Rs, x.E_u, x.E_r, x.u_mask, x.r_mask, cfg.self_rep_kind)
        out_w = semantic_block(pw, Uw, Rw, x.E_u, x.E_r, x.u_mask, x.r_mask, cfg.self_rep_kind)
        m_s = match(out_s.U_fused, out_s.R_fused, x.u_mask, x.r_mask, ps["H"], cfg.pooling, ps.get("pool_gru"))
        m_w = _word_feature(out_w, word["features"][l], x)
        joint = T.concat([m_s, m_w], axis=-1)
        scores.append(("shared", aggregate_stack(x.to_grid(joint), x.turn_mask, params["shared_heads"][l])))
        if trace is not None:
            trace.setdefault("sent_features", []).append(m_s)
            trace.setdefault("word_features", []).append(m_w)
        Us, Rs, Uw, Rw = out_s.U_next, out_s.R_next, out_w.U_next, out_w.R_next
    return scores


def _order_by_channel(scores):
    return [s for s in scores if s[0] == "sent"] + [s for s in scores if s[0] == "word"]


FORWARD = {"pure": sentence_forward, "i1": integrate_i1, "i2": integrate_i2, "i3": integrate_i3}
