"""Central finite differences, the independent oracle for gradient claims."""
from __future__ import annotations

from typing import Callable

import numpy as np


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Estimate df/dx coordinate-wise with (f(x + h e_i) - f(x - h e_i)) / 2h."""
    if h <= 0:
        raise ValueError(f"Step size must be positive, got {h}")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = float(f(x))
        flat[i] = original - h
        lower = float(f(x))
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - b| / max(1, |a|, |b|), elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def check_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    grad: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Compare an analytic gradient at ``x`` against central differences."""
    return relative_error(grad, finite_diff_grad(f, x, h))
