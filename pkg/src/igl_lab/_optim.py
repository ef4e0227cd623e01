"""Minimal Adam update on flat parameter vectors."""
from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, grad: np.ndarray, maximize: bool = False) -> np.ndarray:
        """Return the parameter increment for ``grad``."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        delta = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return delta if maximize else -delta


def batches(n: int, batch_size: int, epochs: int, rng: np.random.Generator, shuffle: str = "once"):
    """Yield ``(epoch, index_array)`` minibatches.

    ``shuffle="once"`` fixes one permutation for all epochs; ``"per_epoch"``
    draws a fresh one each epoch.
    """
    if shuffle not in ("once", "per_epoch"):
        raise ValueError(f"unknown shuffle mode {shuffle!r}")
    order = rng.permutation(n)
    for epoch in range(epochs):
        if shuffle == "per_epoch" and epoch > 0:
            order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield epoch, order[start:start + batch_size]
