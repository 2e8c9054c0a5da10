"""Gradient steps on diffusion latents and prompt embeddings.

A guidance objective is any callable mapping a dict of watched tensors to a
scalar loss (optionally with auxiliary read-outs). ``descend`` re-tapes the
objective on every inner iteration and moves each variable against its
gradient with its own rate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Tuple, Union

import numpy as np

from latentalign.autodiff.tensor import GradGraph, Tensor
from latentalign.errors import NonFiniteGradientError, ShapeMismatchError

logger = logging.getLogger(__name__)

Aux = Dict[str, float]
Objective = Callable[[Mapping[str, Tensor]], Union[Tensor, Tuple[Tensor, Aux]]]


@dataclass
class DescentTrace:
    values: Dict[str, np.ndarray]
    losses: List[float] = field(default_factory=list)
    aux: Aux = field(default_factory=dict)


def _evaluate(objective: Objective, watched: Mapping[str, Tensor]) -> Tuple[Tensor, Aux]:
    out = objective(watched)
    if isinstance(out, tuple):
        return out
    return out, {}


def latent_update(z: np.ndarray, grad: np.ndarray, rate: float) -> np.ndarray:
    """z - rate * grad; returns ``z`` itself when the rate is zero."""
    if rate == 0:
        return z
    return z - rate * grad


def prompt_tune_step(y: np.ndarray, loss_grad: np.ndarray, lambda2: float) -> np.ndarray:
    """Move the prompt embedding against the guidance gradient."""
    y = np.asarray(y, dtype=np.float64)
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if y.shape != loss_grad.shape:
        raise ShapeMismatchError(f"prompt_tune_step: embedding {y.shape} and gradient {loss_grad.shape} differ")
    return latent_update(y, loss_grad, lambda2)


def descend(
    values: Mapping[str, np.ndarray],
    rates: Mapping[str, float],
    objective: Objective,
    num_steps: int,
    updaters: Mapping[str, Callable[[np.ndarray, np.ndarray, float], np.ndarray]] | None = None,
) -> DescentTrace:
    """Run ``num_steps`` simultaneous gradient updates; returns the ``num_steps + 1`` losses seen."""
    if num_steps < 0:
        raise ValueError(f"num_steps must be >= 0, got {num_steps}")
    current = {name: np.asarray(v, dtype=np.float64) for name, v in values.items()}
    updaters = updaters or {}
    trace = DescentTrace(values=current)

    for step in range(num_steps + 1):
        with GradGraph() as graph:
            watched = {name: graph.watch(v) for name, v in current.items()}
            loss, aux = _evaluate(objective, watched)
            trace.losses.append(loss.item())
            trace.aux = aux
            if step == num_steps:
                break
            grads = graph.backward(loss)

        updated = {}
        for name, value in current.items():
            rate = rates.get(name, 0.0)
            grad = grads[watched[name].node_id]
            if rate and not np.all(np.isfinite(grad)):
                logger.error("Non-finite gradient for %s at inner step %d (loss %r); aborting guidance", name, step, trace.losses[-1])
                raise NonFiniteGradientError(f"Gradient of the guidance loss w.r.t. {name} is not finite")
            updated[name] = updaters.get(name, latent_update)(value, grad, rate)
        current = updated

    trace.values = current
    return trace


def guide_step(z_t: np.ndarray, loss_builder: Callable[[Tensor], Tensor], lambda1: float, num_steps: int) -> DescentTrace:
    """``num_steps`` iterations of z <- z - lambda1 * grad_z L(z)."""
    return descend({"z": z_t}, {"z": lambda1}, lambda watched: loss_builder(watched["z"]), num_steps)
