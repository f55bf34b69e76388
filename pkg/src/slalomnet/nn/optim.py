"""Adam and a reduce-on-plateau learning-rate schedule."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _adam_kernel(params, grads, m, v, lr, beta1, beta2, eps, corr1, corr2):
    for i in range(params.size):
        g = grads[i]
        mi = beta1 * m[i] + (1.0 - beta1) * g
        vi = beta2 * v[i] + (1.0 - beta2) * g * g
        m[i] = mi
        v[i] = vi
        params[i] -= lr * (mi / corr1) / (np.sqrt(vi / corr2) + eps)


class Adam:
    """Adam with bias correction, updating a flat parameter vector in place."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
        if params.shape != grads.shape or params.shape != self.m.shape:
            raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, "
                             f"state {self.m.shape}")
        self.t += 1
        corr1 = 1.0 - self.beta1 ** self.t
        corr2 = 1.0 - self.beta2 ** self.t
        _adam_kernel(params, grads, self.m, self.v, lr, self.beta1, self.beta2, self.eps,
                     corr1, corr2)
        return params


class ReduceLROnPlateau:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs
    without improvement of the monitored value, never going below ``min_lr``."""

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 3,
                 min_lr: float = 1e-5):
        if not 0 < factor < 1:
            raise ValueError("factor must lie in (0, 1)")
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = np.inf
        self.stale = 0

    def update(self, value: float) -> float:
        if value < self.best:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.stale = 0
        return self.lr
