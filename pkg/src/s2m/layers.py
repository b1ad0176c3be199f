"""Layer primitives built on :mod:`s2m.tensor`.

Parameters are plain dicts of :class:`Tensor` so that whole models are
flat name -> tensor maps (easy to checkpoint, optimise and grad-check).
All functions accept leading batch dimensions.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import ConfigError, InvalidMaskError, ShapeError
from .tensor import Tensor

POOLING = ("max", "mean", "gru")


# -- initialisers ----------------------------------------------------------

def glorot(rng, fan_in, fan_out, shape=None):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return T.parameter(rng.uniform(-limit, limit, size=shape))


def linear_params(rng, n_in, n_out):
    return {"W": glorot(rng, n_in, n_out), "b": T.parameter(np.zeros(n_out))}


def conv1d_params(rng, n_filters, height, width):
    fan_in, fan_out = height * width, height * n_filters
    return {"W": glorot(rng, fan_in, fan_out, (n_filters, height, width)),
            "b": T.parameter(np.zeros(n_filters))}


def gru_params(rng, n_in, hidden):
    """Wx stacks the reset/update/candidate input maps; Wh holds reset/update recurrences."""
    return {"Wx": glorot(rng, n_in, hidden, (n_in, 3 * hidden)),
            "Wh": glorot(rng, hidden, hidden, (hidden, 2 * hidden)),
            "Wn": glorot(rng, hidden, hidden),
            "b": T.parameter(np.zeros(3 * hidden))}


def layer_norm_params(width):
    return {"gain": T.parameter(np.ones(width)), "offset": T.parameter(np.zeros(width))}


# -- basic layers ----------------------------------------------------------

def feed_forward(x, W, b, activation="relu") -> Tensor:
    x = T.as_tensor(x)
    if x.ndim == 1:
        out = T.matmul(T.reshape(x, (1, -1)), W)[0] + b
    else:
        out = T.matmul(x, W) + b
    if activation == "relu":
        return T.relu(out)
    if activation in ("identity", None):
        return out
    raise ConfigError(f"unknown activation {activation!r}")


def conv1d(x, filters, bias, activation="relu") -> Tensor:
    out = T.conv1d_linear(x, filters, bias)
    return T.relu(out) if activation == "relu" else out


def layer_norm(x, gain, offset, eps=1e-6) -> Tensor:
    return T.layer_norm(x, gain, offset, eps)


def softmax_rows(x, mask=None) -> Tensor:
    """Row softmax. Masked entries receive -1e9 logits; a fully masked row is an error."""
    return T.softmax(x, mask)


def attention(q, k, v, key_mask=None, scale=None) -> Tensor:
    """softmax(q k^T / sqrt(width)) v with masked keys.

    key_mask is (..., Tk) and applies to every query row.
    """
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query {q.shape} and key {k.shape} widths differ")
    scale = scale if scale is not None else 1.0 / math.sqrt(q.shape[-1])
    logits = T.matmul(q, T.swap_last(k)) * scale
    mask = None
    if key_mask is not None:
        mask = np.asarray(key_mask, dtype=bool)[..., None, :]
    weights = T.softmax(logits, mask)
    return T.matmul(weights, v)


def mask_rows(x, mask) -> Tensor:
    """Zero every position whose mask entry is False; x is (..., T, d), mask (..., T)."""
    return T.where(np.asarray(mask, dtype=bool)[..., None], x, 0.0)


# -- recurrent -------------------------------------------------------------

def gru_step(h_prev, x, p, gx=None) -> Tensor:
    """One gated recurrent update.

    r = sigmoid(x Wx_r + h Wh_r + b_r), z likewise, n = tanh(x Wx_n + (r*h) Wn + b_n),
    h' = (1 - z) * n + z * h.  ``gx`` may carry a precomputed ``x @ Wx + b``.
    """
    H = p["Wn"].shape[0]
    if gx is None:
        if T.as_tensor(x).shape[-1] != p["Wx"].shape[0]:
            raise ShapeError(f"GRU input {T.as_tensor(x).shape} does not match Wx {p['Wx'].shape}")
        gx = T.matmul(_as_matrix(x), p["Wx"]) + p["b"]
        squeeze = T.as_tensor(x).ndim == 1
    else:
        squeeze = False
    h2 = _as_matrix(h_prev)
    gh = T.matmul(h2, p["Wh"])
    r = T.sigmoid(gx[..., :H] + gh[..., :H])
    z = T.sigmoid(gx[..., H:2 * H] + gh[..., H:])
    n = T.tanh(gx[..., 2 * H:] + T.matmul(r * h2, p["Wn"]))
    h = (1.0 - z) * n + z * h2
    return h[0] if squeeze else h


def _as_matrix(x):
    x = T.as_tensor(x)
    return T.reshape(x, (1, -1)) if x.ndim == 1 else x


def gru_sequence(x, mask, p, h0=None):
    """Run a GRU over the T axis of x (N, T, d), skipping masked steps.

    A masked step leaves the hidden state untouched, so the final state and
    every emitted state depend only on unmasked inputs. Returns
    (states (N, T, H), final (N, H)).
    """
    x = T.as_tensor(x)
    N, steps = x.shape[0], x.shape[1]
    H = p["Wn"].shape[0]
    mask = np.asarray(mask, dtype=bool)
    h = h0 if h0 is not None else T.Tensor(np.zeros((N, H), dtype=x.dtype))
    gx_all = T.matmul(x, p["Wx"]) + p["b"]
    states = []
    for t in range(steps):
        live = mask[:, t]
        if not live.any():
            states.append(h)
            continue
        h_new = gru_step(h, None, p, gx=gx_all[:, t])
        h = h_new if live.all() else T.where(live[:, None], h_new, h)
        states.append(h)
    stacked = T.concat([T.reshape(s, (N, 1, H)) for s in states], axis=1)
    return stacked, h


# -- pooling ---------------------------------------------------------------

def pool(x, mask, strategy="max", gru=None, allow_empty=False) -> Tensor:
    """Reduce (..., T, d) to (..., d) over unmasked positions."""
    mask = np.asarray(mask, dtype=bool)
    if not allow_empty and not np.all(mask.any(axis=-1)):
        raise InvalidMaskError("pooling over a fully masked sequence")
    if strategy == "max":
        return T.masked_max(x, mask, allow_empty=allow_empty)
    if strategy == "mean":
        return T.masked_mean(x, mask, allow_empty=allow_empty)
    if strategy == "gru":
        if gru is None:
            raise ConfigError("gru pooling needs GRU parameters")
        x = T.as_tensor(x)
        lead = x.shape[:-2]
        flat = T.reshape(x, (-1,) + x.shape[-2:])
        _, final = gru_sequence(flat, mask.reshape(-1, mask.shape[-1]), gru)
        return T.reshape(final, lead + (final.shape[-1],))
    raise ConfigError(f"unknown pooling strategy {strategy!r}")


def interaction(a, b) -> Tensor:
    """[a, b, a - b, a * b] along the last axis."""
    return T.concat([a, b, a - b, a * b], axis=-1)
