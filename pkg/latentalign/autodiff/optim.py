"""Adam, used only to train the toy denoisers and the binder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from latentalign.errors import ShapeMismatchError

Params = Dict[str, np.ndarray]


@dataclass
class OptimizerState:
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[Params, OptimizerState]:
    """One bias-corrected Adam update. Parameters without a gradient are left as-is."""
    if lr <= 0:
        raise ValueError(f"Learning rate must be positive, got {lr}")

    step = state.step + 1
    first = dict(state.first_moment)
    second = dict(state.second_moment)
    updated: Params = {}

    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            updated[name] = value
            continue
        if grad.shape != value.shape:
            raise ShapeMismatchError(f"adam: gradient for {name!r} has shape {grad.shape}, parameter {value.shape}")
        m = first.get(name, np.zeros_like(value))
        v = second.get(name, np.zeros_like(value))
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        first[name], second[name] = m, v

    return updated, OptimizerState(first_moment=first, second_moment=second, step=step)
