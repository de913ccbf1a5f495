from __future__ import annotations

from typing import Iterable

import numpy as np

from freqest.nn.tensor import Parameter


class Adam:
    """Bias-corrected Adam; moment buffers live on each :class:`Parameter`."""

    def __init__(self, params: Iterable[Parameter], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            p.adam_step += 1
            t = p.adam_step
            g = p.grad
            p.adam_m *= b1
            p.adam_m += (1 - b1) * g
            p.adam_v *= b2
            p.adam_v += (1 - b2) * (g * g)
            if self.lr == 0:
                continue
            m_hat = p.adam_m / (1 - b1**t)
            v_hat = p.adam_v / (1 - b2**t)
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


def adam_step(params: Iterable[Parameter], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    Adam(params, lr, (beta1, beta2), eps).step()
