"""Adam and the exponential moving average of parameters."""

import numpy as np

from cpsample_lab.common import ShapeMismatchException


class Adam:
    """Adam over a {name: ndarray} parameter dict. Updates the arrays in place."""

    def __init__(self, params, lr=2e-4, b1=0.9, b2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = params
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        for name, g in grads.items():
            g = np.asarray(g)
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            m_hat = self.m[name] / (1 - self.b1**self.t)
            v_hat = self.v[name] / (1 - self.b2**self.t)
            self.params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def ema_update(params, shadow, rate):
    """shadow' = rate * shadow + (1 - rate) * params, elementwise. Returns a new dict."""
    if not 0 <= rate < 1:
        raise ValueError(f"EMA rate must lie in [0, 1), got {rate}")
    out = {}
    for name, p in params.items():
        s = shadow[name]
        if np.shape(s) != np.shape(p):
            raise ShapeMismatchException(f"{name}: {np.shape(s)} vs {np.shape(p)}")
        out[name] = p.copy() if rate == 0 else rate * s + (1 - rate) * p
    return out
