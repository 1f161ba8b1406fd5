"""Adam optimizer with bias correction, applied in place."""

from __future__ import annotations

import numpy as np


class NonFiniteGradientError(Exception):
    pass


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError("NaN or infinite gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)

    def load_state(self, state) -> None:
        t, m_blocks, v_blocks = state
        self.t = t
        for dst, src in zip(self.m, m_blocks):
            dst[...] = src
        for dst, src in zip(self.v, v_blocks):
            dst[...] = src
