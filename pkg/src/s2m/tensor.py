"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ``ndarray`` and, when it takes part in a
differentiable computation, a record of the operation that produced it.
:func:`backward` walks that record in reverse topological order and
accumulates gradients into the leaf tensors that require them.

Most operations accept arbitrary leading batch dimensions and follow numpy
broadcasting rules. A handful of fused kernels (masked softmax, layer norm,
1-D / 2-D convolution, masked pooling) exist because composing them from
primitives would be slow or numerically fragile.
"""

from __future__ import annotations

import contextlib
import enum
import threading

import numpy as np

from .errors import ConfigError, InvalidMaskError, ShapeError

MASK_NEG = -1e9


class PrecisionMode(enum.Enum):
    STANDARD = "standard-32bit"
    CHECK = "check-64bit"

    @property
    def dtype(self):
        return np.float32 if self is PrecisionMode.STANDARD else np.float64

    @classmethod
    def parse(cls, value) -> "PrecisionMode":
        if isinstance(value, cls):
            return value
        if str(value) in ("32", "standard", "standard-32bit"):
            return cls.STANDARD
        if str(value) in ("64", "check", "check-64bit"):
            return cls.CHECK
        raise ValueError(f"unknown precision {value!r}")


_precision = PrecisionMode.STANDARD


def get_precision() -> PrecisionMode:
    return _precision


def set_precision(mode) -> None:
    global _precision
    _precision = PrecisionMode.parse(mode)


def default_dtype():
    return _precision.dtype


# per thread, so concurrent scoring workers cannot clobber each other
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad", True)


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block; forward values are unchanged."""
    saved = grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = saved


@contextlib.contextmanager
def precision(mode):
    """Temporarily switch the dtype used for newly created tensors."""
    global _precision
    saved = _precision
    _precision = PrecisionMode.parse(mode)
    try:
        yield _precision
    finally:
        _precision = saved


class Tensor:
    __array_priority__ = 100
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="", name=None):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=default_dtype())
        self.data = data
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(data) if (requires_grad and not _parents) else None
        self._parents = _parents
        self._backward = _backward
        self.op = op
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __matmul__ = lambda self, o: matmul(self, o)
    __neg__ = lambda self: neg(self)
    __getitem__ = lambda self, idx: getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def tensor(data, requires_grad=False, dtype=None, name=None) -> Tensor:
    arr = np.array(data, dtype=dtype or default_dtype())
    return Tensor(arr, requires_grad=requires_grad, name=name)


def parameter(data, name=None) -> Tensor:
    return tensor(data, requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, np.ndarray) and x.dtype.kind == "f":
        return Tensor(x)
    return Tensor(np.asarray(x, dtype=default_dtype()))


def _node(data, parents, fn, op) -> Tensor:
    if grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=fn, op=op)
    return Tensor(data, op=op)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- graph traversal -------------------------------------------------------

def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` (through grad-requiring edges), parents first."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


def zero_grad(params) -> None:
    for p in params:
        p.zero_grad()


# -- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), fn, "mul")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def relu(x) -> Tensor:
    x = as_tensor(x)
    live = x.data > 0
    return _node(np.where(live, x.data, 0).astype(x.dtype), (x,), lambda g: (g * live,), "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # tanh form avoids overflow in exp for large |x|
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def log(x) -> Tensor:
    x = as_tensor(x)
    return _node(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def clip(x, lo, hi) -> Tensor:
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _node(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clip")


def where(cond, a, b) -> Tensor:
    """Select from ``a`` where the boolean array ``cond`` holds, else from ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    zero = np.zeros((), dtype=np.result_type(a.dtype, b.dtype))

    def fn(g):
        return (_unbroadcast(np.where(cond, g, zero), a.shape),
                _unbroadcast(np.where(cond, zero, g), b.shape))

    return _node(np.where(cond, a.data, b.data), (a, b), fn, "where")


# -- reductions and shape --------------------------------------------------

def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), fn, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return _node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),), "transpose")


def swap_last(x) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))


def getitem(x, idx) -> Tensor:
    """Basic (slice / integer) indexing."""
    x = as_tensor(x)

    def fn(g):
        out = np.zeros_like(x.data)
        out[idx] = g
        return (out,)

    return _node(x.data[idx], (x,), fn, "getitem")


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, fn, "concat")


def take_rows(table, ids) -> Tensor:
    """Gather rows of a 2-D ``table`` by integer ``ids`` of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"id out of range [0, {table.shape[0]})")

    def fn(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (out,)

    return _node(table.data[ids], (table,), fn, "take_rows")


# -- linear algebra --------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")

    def fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _node(a.data @ b.data, (a, b), fn, "matmul")


# -- fused kernels ---------------------------------------------------------

def _check_mask_rows(mask):
    if not np.all(mask.any(axis=-1)):
        raise InvalidMaskError("softmax row has no unmasked position")


def softmax(x, mask=None, check=True) -> Tensor:
    """Softmax over the last axis; ``mask`` False entries get ``MASK_NEG`` added to their logits."""
    x = as_tensor(x)
    logits = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if check:
            _check_mask_rows(np.broadcast_to(mask, x.shape))
        logits = logits + np.where(mask, 0.0, MASK_NEG).astype(x.dtype)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (x,), fn, "softmax")


def layer_norm(x, gain, offset, eps=1e-6) -> Tensor:
    x, gain, offset = as_tensor(x), as_tensor(gain), as_tensor(offset)
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv

    def fn(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return (gx,
                _unbroadcast(g * xhat, gain.shape),
                _unbroadcast(g, offset.shape))

    return _node(xhat * gain.data + offset.data, (x, gain, offset), fn, "layer_norm")


def conv1d_linear(x, filters, bias) -> Tensor:
    """SAME-padded 1-D convolution, no activation.

    x: (..., T, d); filters: (s, h, d) with odd h; bias: (s,). Returns (..., T, s).
    """
    x, filters, bias = as_tensor(x), as_tensor(filters), as_tensor(bias)
    s, h, d = filters.shape
    if h % 2 == 0:
        raise ConfigError(f"convolution kernel height must be odd, got {h}")
    if x.shape[-1] != d:
        raise ShapeError(f"conv1d input width {x.shape} does not match filters {filters.shape}")
    half = (h - 1) // 2
    T = x.shape[-2]
    lead = x.shape[:-2]
    pad = [(0, 0)] * len(lead) + [(half, half), (0, 0)]
    xp = np.pad(x.data, pad)
    cols = np.stack([xp[..., k:k + T, :] for k in range(h)], axis=-2)  # (..., T, h, d)
    cols = cols.reshape(*lead, T, h * d)
    w = filters.data.reshape(s, h * d).T  # (h*d, s)
    out = cols @ w + bias.data

    def fn(g):
        gw = (cols.reshape(-1, h * d).T @ g.reshape(-1, s)).T.reshape(s, h, d)
        gb = g.reshape(-1, s).sum(axis=0)
        gcols = (g @ w.T).reshape(*lead, T, h, d)
        gxp = np.zeros_like(xp)
        for k in range(h):
            gxp[..., k:k + T, :] += gcols[..., k, :]
        return gxp[..., half:half + T, :], gw, gb

    return _node(out, (x, filters, bias), fn, "conv1d")


def conv2d_linear(x, filters, bias) -> Tensor:
    """SAME-padded 2-D convolution, stride 1, no activation.

    x: (N, C, H, W); filters: (F, C, kh, kw) with odd kernel sides; bias: (F,).
    Returns (N, F, H, W).
    """
    x, filters, bias = as_tensor(x), as_tensor(filters), as_tensor(bias)
    F, C, kh, kw = filters.shape
    N, Cx, H, W = x.shape
    if Cx != C:
        raise ShapeError(f"conv2d channels {x.shape} do not match filters {filters.shape}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x.data, [(0, 0), (0, 0), (ph, ph), (pw, pw)])
    # cols: (N, H, W, C, kh, kw)
    cols = np.empty((N, H, W, C, kh, kw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[..., i, j] = xp[:, :, i:i + H, j:j + W].transpose(0, 2, 3, 1)
    cols = cols.reshape(N, H, W, C * kh * kw)
    w = filters.data.reshape(F, -1).T
    out = (cols @ w + bias.data).transpose(0, 3, 1, 2)

    def fn(g):
        g = g.transpose(0, 2, 3, 1)  # (N, H, W, F)
        gw = (cols.reshape(-1, C * kh * kw).T @ g.reshape(-1, F)).T.reshape(F, C, kh, kw)
        gb = g.reshape(-1, F).sum(axis=0)
        gcols = (g @ w.T).reshape(N, H, W, C, kh, kw)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + H, j:j + W] += gcols[..., i, j].transpose(0, 3, 1, 2)
        return gxp[:, :, ph:ph + H, pw:pw + W], gw, gb

    return _node(np.ascontiguousarray(out), (x, filters, bias), fn, "conv2d")


def masked_max(x, mask, axes=(-2,), allow_empty=False) -> Tensor:
    """Maximum over ``axes`` restricted to positions where ``mask`` is True.

    ``mask`` must broadcast against ``x``; a mask shaped like ``x`` minus its
    trailing feature axis is expanded automatically. Fully masked selections
    raise unless ``allow_empty``, in which case they yield 0 and no gradient.
    The gradient goes to the first maximiser.
    """
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == x.ndim - 1:
        mask = mask[..., None]
    mask = np.broadcast_to(mask, x.shape)
    nd = x.ndim
    axes = tuple(sorted(a % nd for a in axes))
    keep = [a for a in range(nd) if a not in axes]
    perm = keep + list(axes)
    inverse = tuple(np.argsort(perm))
    moved = np.where(mask, x.data, -np.inf).transpose(perm)
    kept_shape = moved.shape[:len(keep)]
    flat = moved.reshape(*kept_shape, -1)
    live = mask.transpose(perm).reshape(*kept_shape, -1).any(axis=-1)
    if not allow_empty and not np.all(live):
        raise InvalidMaskError("pooling over a fully masked sequence")
    idx = flat.argmax(axis=-1)[..., None]
    out = np.take_along_axis(flat, idx, axis=-1)[..., 0]
    out = np.where(live, out, 0).astype(x.dtype)

    def fn(g):
        gflat = np.zeros(flat.shape, dtype=x.dtype)
        np.put_along_axis(gflat, idx, np.where(live, g, 0)[..., None], axis=-1)
        return (gflat.reshape(moved.shape).transpose(inverse),)

    return _node(out, (x,), fn, "masked_max")


def masked_mean(x, mask, allow_empty=False) -> Tensor:
    """Mean over the T axis of (..., T, d) restricted to ``mask`` (..., T)."""
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=-1)
    if not allow_empty and not np.all(counts > 0):
        raise InvalidMaskError("pooling over a fully masked sequence")
    denom = np.maximum(counts, 1).astype(x.dtype)[..., None]
    m = mask[..., None]
    out = np.where(m, x.data, 0).sum(axis=-2) / denom

    def fn(g):
        return (np.where(m, (g / denom)[..., None, :], 0).astype(x.dtype),)

    return _node(out, (x,), fn, "masked_mean")
