"""Adam optimizer with bias correction, plus the stepped halving schedule."""

from __future__ import annotations

import numpy as np

DEFAULT_BASE_LR = 3e-4
DEFAULT_HALVE_EPOCHS = (50, 60, 70, 80, 90, 100)


class AdamState:
    """Per-parameter first/second moments and a shared step counter.

    beta1=0.9, beta2=0.999, eps=1e-8 (the optimizer's default parameters).
    """

    def __init__(self, params: dict, lr: float = DEFAULT_BASE_LR,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.value) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.value) for name, p in params.items()}

    def step(self, params: dict) -> None:
        """Apply one Adam update in place; every param must carry a .grad."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = p.grad
            if g is None:
                raise ValueError(f"parameter {name!r} has no gradient; run backward first")
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.value = p.value - (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.value.dtype)


def adam_step(state: AdamState, params: dict) -> None:
    state.step(params)


def lr_schedule(epoch: int, base_lr: float = DEFAULT_BASE_LR,
                halve_epochs: tuple[int, ...] = DEFAULT_HALVE_EPOCHS) -> float:
    """Base rate halved cumulatively at each listed epoch boundary.

    `epoch` is 0-based; a boundary `e` applies from epoch e onward, so with a
    100-epoch run the final listed boundary (100) never fires.
    """
    halvings = sum(1 for e in halve_epochs if epoch >= e)
    return base_lr * (0.5 ** halvings)
