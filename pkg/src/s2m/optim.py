"""Adam with bias correction and a staircase exponential learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def learning_rate(step, base=5e-4, decay=0.9, every=5000):
    """Rate in force at 0-based ``step``: base * decay ** (step // every)."""
    return base * decay ** (step // every)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_update(params, grads, state, lr, step, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam step on ``params`` (name -> Tensor) using ``grads`` (name -> ndarray).

    ``step`` is 1-based and drives the bias correction.
    """
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= update.astype(p.data.dtype)
    state.step = step
    return params, state


class Adam:
    def __init__(self, params, lr=5e-4, decay=0.9, decay_every=5000):
        self.params = dict(params)
        self.base_lr = lr
        self.decay = decay
        self.decay_every = decay_every
        self.state = AdamState()

    @property
    def steps_taken(self):
        return self.state.step

    def current_lr(self):
        return learning_rate(self.state.step, self.base_lr, self.decay, self.decay_every)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        lr = self.current_lr()
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
                 for k, p in self.params.items()}
        adam_update(self.params, grads, self.state, lr, self.state.step + 1)
        return lr
