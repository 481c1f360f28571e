"""Adam with bias correction; the only optimizer the trainers need."""

from __future__ import annotations

import numpy as np

from .params import ParamStore


def adam_step(
    params: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one bias-corrected moment update to every parameter, then zero grads."""
    params.step += 1
    t = params.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for _, slot in params._slots_items():
        g = slot.grad
        slot.m1 *= beta1
        slot.m1 += (1.0 - beta1) * g
        slot.m2 *= beta2
        slot.m2 += (1.0 - beta2) * g * g
        m_hat = slot.m1 / c1
        v_hat = slot.m2 / c2
        slot.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        g.fill(0.0)
