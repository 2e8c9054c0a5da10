"""Minimal dense tensors with reverse-mode differentiation."""
from latentalign.autodiff import ops
from latentalign.autodiff.gradcheck import check_gradient, finite_diff_grad, relative_error
from latentalign.autodiff.optim import OptimizerState, adam_step
from latentalign.autodiff.tensor import GradGraph, Tensor, as_tensor, backward

__all__ = [
    "GradGraph",
    "OptimizerState",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "check_gradient",
    "finite_diff_grad",
    "ops",
    "relative_error",
]
