"""Central finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import PrecisionMode, backward, get_precision, no_grad
from .errors import ConfigError


def relative_error(analytic, numeric, floor=1e-12):
    """||a - n|| / max(||a||, ||n||); 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom < floor:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def numeric_gradient(f, param, step=1e-5, indices=None):
    """d f / d param by central differences, for the flat ``indices`` (all if None)."""
    flat = param.data.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    out = np.zeros(flat.size, dtype=np.float64)
    for i in indices:
        saved = flat[i]
        flat[i] = saved + step
        up = float(f())
        flat[i] = saved - step
        down = float(f())
        flat[i] = saved
        out[i] = (up - down) / (2 * step)
    return out.reshape(param.shape)


@dataclass
class TensorCheck:
    name: str
    size: int
    checked: int
    error: float


def check_gradients(loss_fn, params, step=1e-5, max_entries=None, rng=None):
    """Compare autodiff gradients of ``loss_fn()`` with central differences.

    ``params`` maps names to leaf tensors. With ``max_entries`` set, larger
    tensors are compared on a random subset of that many coordinates.
    Returns one :class:`TensorCheck` per tensor.
    """
    if get_precision() is not PrecisionMode.CHECK:
        raise ConfigError("gradient checks require check-64bit precision")
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    backward(loss)
    rng = rng if rng is not None else np.random.default_rng(0)

    def value():
        with no_grad():
            return loss_fn().data

    results = []
    for name, p in params.items():
        size = p.data.size
        if max_entries is not None and size > max_entries:
            idx = np.sort(rng.choice(size, size=max_entries, replace=False))
        else:
            idx = np.arange(size)
        numeric = numeric_gradient(value, p, step, idx).reshape(-1)[idx]
        analytic = p.grad.reshape(-1)[idx]
        results.append(TensorCheck(name, size, len(idx), relative_error(analytic, numeric)))
    return results
