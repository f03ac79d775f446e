"""Parameters and the Adam optimizer."""

from __future__ import annotations

import numpy as np

from .tensor import ContractError, Tensor


class Parameter:
    """A named trainable tensor together with its Adam moments."""

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)
        self.adam_m = np.zeros_like(self.tensor.data)
        self.adam_v = np.zeros_like(self.tensor.data)
        self.step_count = 0

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    @property
    def shape(self):
        return self.tensor.shape

    def zero_grad(self) -> None:
        self.tensor.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


class Adam:
    """Adam with bias correction.

    Defaults follow StyleGAN2 practice (lr=2e-3, beta1=0, beta2=0.99).
    """

    def __init__(self, params, lr=2e-3, beta1=0.0, beta2=0.99, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self) -> None:
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def adam_step(params, lr: float, beta1: float = 0.0, beta2: float = 0.99, eps: float = 1e-8) -> None:
    """Apply one Adam update to every parameter, then clear its gradient."""
    missing = [p.name for p in params if p.grad is None]
    if missing:
        raise ContractError(f"no gradient for parameters: {', '.join(missing)}")
    for p in params:
        g = p.grad
        p.step_count += 1
        t = p.step_count
        p.adam_m *= beta1
        p.adam_m += (1 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1 - beta2) * (g * g)
        m_hat = p.adam_m / (1 - beta1**t)
        v_hat = p.adam_v / (1 - beta2**t)
        update = (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)
        p.tensor.data -= update
        p.zero_grad()
