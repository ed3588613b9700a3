"""Adam optimizer over named parameter tensors.

Implements the bias-corrected update

    m <- b1*m + (1-b1)*g         v <- b2*v + (1-b2)*g^2
    p <- p - lr * m_hat / (sqrt(v_hat) + eps)

with m_hat = m/(1-b1^t) and v_hat = v/(1-b2^t), applied elementwise.
"""

from __future__ import annotations

import numpy as np

from .autograd import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params: dict[str, Tensor], beta1: float = BETA1, beta2: float = BETA2, eps: float = EPS):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float) -> None:
    """Apply one update in place from each parameter's .grad, then clear it.

    Parameters with no accumulated gradient are skipped entirely; their
    moment buffers do not advance.  The step counter advances once per call.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p.data -= (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        p.grad = None


class Adam:
    """Thin stateful wrapper tying a parameter dict to its AdamState."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, beta1: float = BETA1, beta2: float = BETA2, eps: float = EPS):
        self.params = params
        self.lr = lr
        self.state = AdamState(params, beta1=beta1, beta2=beta2, eps=eps)

    def step(self) -> None:
        adam_step(self.params, self.state, self.lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
