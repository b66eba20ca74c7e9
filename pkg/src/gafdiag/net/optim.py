"""Adam optimizer and the stepped learning-rate schedule."""

from __future__ import annotations

import numpy as np


def lr_at_epoch(initial_lr, epoch, decay=0.8, every=3):
    """Learning rate for a zero-based epoch index: decayed every `every` epochs."""
    return initial_lr * decay ** (epoch // every)


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr=None):
        if lr is None:
            lr = self.lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for param, m, v in zip(self.params, self._m, self._v):
            if param.grad is None:
                continue
            g = param.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            mhat = m / bias1
            vhat = v / bias2
            param.data -= lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for param in self.params:
            param.grad = None
