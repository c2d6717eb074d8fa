"""Gradient-descent optimizers over lists of parameter tensors.

Both optimizers read p.grad and update p.data in place; parameters whose grad
is None (nothing reached them) are left untouched. State is positional, so
always pass the same parameter list in the same order.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError


def zero_grads(params: list[Tensor]) -> None:
    for p in params:
        p.grad = None


class Sgd:
    """Plain gradient descent: p -= lr * g."""

    def __init__(self, lr: float):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.steps = 0

    def step(self, params: list[Tensor]) -> None:
        for p in params:
            if p.grad is not None:
                p.data -= np.asarray(self.lr, dtype=p.dtype) * p.grad
        self.steps += 1


class Adam:
    """Adaptive moments with bias correction.

    m and v track the first and second moment per parameter; the update is
    p -= lr * m_hat / (sqrt(v_hat) + eps).
    """

    def __init__(self, lr: float = 0.003, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params: list[Tensor]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p.data) for p in params]
            self._v = [np.zeros_like(p.data) for p in params]
        if len(self._m) != len(params):
            raise ConfigError("parameter list changed length between steps")
        self.steps += 1
        t = self.steps
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


def make_optimizer(kind: str, lr: float):
    if kind == "adam":
        return Adam(lr=lr)
    if kind == "sgd":
        return Sgd(lr=lr)
    raise ConfigError(f"unknown optimizer {kind!r}; expected 'adam' or 'sgd'")
