"""Adam optimizer.

Standard Adam with bias correction (update = lr * m_hat / (sqrt(v_hat) +
eps)). Moments are kept per parameter, initialized to zero; the step count
increments by exactly one per ``step()``. ``lr`` is a plain attribute so
training loops can apply schedules.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError
from .tensor import Tensor


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Tensor] = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise GraphError(
                    f"adam step: parameter {i} (shape {p.shape}) has no "
                    "gradient; run backward first")
            if p.grad.shape != p.data.shape:
                raise GraphError(
                    f"adam step: gradient shape {p.grad.shape} does not "
                    f"match parameter shape {p.shape}")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / (1.0 - b1 ** t)
            v_hat = v / (1.0 - b2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
