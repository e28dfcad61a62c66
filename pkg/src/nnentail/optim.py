"""Gradient-descent updates over a ParameterSet.

Both optimizers touch only tensors whose trainable flag is set and that
received a gradient, so frozen parameters stay bitwise unchanged.
"""

from __future__ import annotations

import numpy as np

from .encoder import ParameterSet


class SGD:
    def __init__(self, params: ParameterSet, lr: float):
        self.params = params
        self.lr = lr

    def step(self) -> None:
        for _, t in self.params.trainable_items():
            if t.grad is not None:
                t.data -= self.lr * t.grad


class Adam:
    def __init__(self, params: ParameterSet, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        self.t += 1
        for name, tensor in self.params.trainable_items():
            g = tensor.grad
            if g is None:
                continue
            m = self._m.setdefault(name, np.zeros_like(tensor.data))
            v = self._v.setdefault(name, np.zeros_like(tensor.data))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, params: ParameterSet, lr: float):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {kind!r} (use 'adam' or 'sgd')")
