"""Adam optimizer (with the amsgrad variant) over lists of real arrays.

Complex variables are optimized through their real views, i.e. the real
and imaginary parts are treated as independent parameters.
"""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8, amsgrad=True):
        if lr <= 0:
            raise ValueError("learning rate must be > 0")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.amsgrad = amsgrad
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.v_hat_max = [np.zeros(s) for s in shapes] if amsgrad else None

    def step(self, params, grads):
        """Update params in place given matching gradient arrays."""
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / b1c
            v_hat = self.v[i] / b2c
            if self.amsgrad:
                np.maximum(self.v_hat_max[i], v_hat, out=self.v_hat_max[i])
                denom = np.sqrt(self.v_hat_max[i]) + self.eps
            else:
                denom = np.sqrt(v_hat) + self.eps
            p -= self.lr * m_hat / denom


class GradientDescent:
    """Plain fixed-step gradient descent with the same interface."""

    def __init__(self, shapes, lr):
        if lr <= 0:
            raise ValueError("learning rate must be > 0")
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def make_optimizer(name, shapes, lr):
    if name == "adam-amsgrad":
        return Adam(shapes, lr, amsgrad=True)
    if name == "gradient-descent":
        return GradientDescent(shapes, lr)
    raise ValueError(f"unknown optimizer: {name!r}")
