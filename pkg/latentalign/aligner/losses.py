"""Guidance objectives built from the binder distance F(e1, e2) = 1 - cos(e1, e2)."""
from __future__ import annotations

from typing import Any, Optional

from latentalign.autodiff import ops
from latentalign.autodiff.tensor import Tensor
from latentalign.models.binder import embedding_distance


def _total(distance: Tensor) -> Tensor:
    # Row-wise distances over a batch are summed so each row's gradient is its own.
    return ops.sum(distance) if distance.data.ndim else distance


def cross_guidance_loss(e_gen: Any, e_cond: Any, e_p: Optional[Any] = None) -> Tensor:
    """F(e_gen, e_cond) + F(e_gen, e_p), or F(e_gen, e_cond) alone when no prompt is given."""
    loss = _total(embedding_distance(e_gen, e_cond))
    if e_p is None:
        return loss
    return ops.add(loss, _total(embedding_distance(e_gen, e_p)))


def joint_guidance_loss(e_v: Any, e_a: Any, e_p: Any) -> Tensor:
    """Triangle loss F(e_v, e_p) + F(e_v, e_a) + F(e_a, e_p)."""
    return ops.add(
        ops.add(_total(embedding_distance(e_v, e_p)), _total(embedding_distance(e_v, e_a))),
        _total(embedding_distance(e_a, e_p)),
    )
