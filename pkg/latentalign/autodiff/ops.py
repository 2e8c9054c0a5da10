"""Differentiable primitives.

Each primitive is a forward function plus an entry in ``VJPS`` giving its
vector-Jacobian product. Shapes must line up exactly: the only broadcast
is multiplication by a Python scalar (``scale``).
"""
from __future__ import annotations

from typing import Any, Dict, Optional, Sequence

import numpy as np

from latentalign.autodiff.tensor import VJP, Node, Tensor, active_graph, as_tensor
from latentalign.errors import DegenerateNormError, ShapeMismatchError

NORM_FLOOR = 1e-12

PRIMITIVES = (
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "tanh",
    "softplus",
    "sum",
    "mean",
    "transpose",
    "l2_normalize",
    "cosine_similarity",
    "squared_error",
    "concatenate",
    "log_softmax",
)


def _emit(kind: str, inputs: Sequence[Tensor], output: np.ndarray, **saved: Any) -> Tensor:
    graph = active_graph()
    if graph is not None and any(t.tracked() for t in inputs):
        return graph.record(kind, inputs, output, saved)
    return Tensor(output)


def _same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{kind}: shapes {a.shape} and {b.shape} differ")


def _row_norms(x: np.ndarray, kind: str) -> np.ndarray:
    norms = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    if np.any(norms < NORM_FLOOR):
        raise DegenerateNormError(f"{kind}: vector norm below {NORM_FLOOR:g}")
    return norms


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --- forward -----------------------------------------------------------------
def matmul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _emit("matmul", (a, b), a.data @ b.data, a=a.data, b=b.data)


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _emit("add", (a, b), a.data + b.data)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _emit("sub", (a, b), a.data - b.data)


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    return _emit("mul", (a, b), a.data * b.data, a=a.data, b=b.data)


def scale(a: Any, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)
    return _emit("scale", (a,), a.data * factor, factor=factor)


def tanh(a: Any) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _emit("tanh", (a,), out, out=out)


def softplus(a: Any) -> Tensor:
    a = as_tensor(a)
    return _emit("softplus", (a,), np.logaddexp(0.0, a.data), x=a.data)


def sum(a: Any) -> Tensor:  # noqa: A001 - mirrors the primitive name
    a = as_tensor(a)
    return _emit("sum", (a,), np.asarray(np.sum(a.data)), in_shape=a.shape)


def mean(a: Any) -> Tensor:
    a = as_tensor(a)
    return _emit("mean", (a,), np.asarray(np.mean(a.data)), in_shape=a.shape)


def transpose(a: Any) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"transpose: expected a matrix, got shape {a.shape}")
    return _emit("transpose", (a,), a.data.T.copy())


def l2_normalize(a: Any) -> Tensor:
    """Unit-normalize a vector, or each row of a matrix."""
    a = as_tensor(a)
    norms = _row_norms(a.data, "l2_normalize")
    out = a.data / norms
    return _emit("l2_normalize", (a,), out, out=out, norms=norms)


def cosine_similarity(a: Any, b: Any) -> Tensor:
    """Cosine of two vectors (scalar) or of matching rows (vector of length n)."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("cosine_similarity", a, b)
    na = _row_norms(a.data, "cosine_similarity")
    nb = _row_norms(b.data, "cosine_similarity")
    dots = np.sum(a.data * b.data, axis=-1, keepdims=True)
    cos = dots / (na * nb)
    out = cos[..., 0]
    return _emit("cosine_similarity", (a, b), out, a=a.data, b=b.data, na=na, nb=nb, cos=cos)


def squared_error(a: Any, b: Any) -> Tensor:
    """Sum of squared differences."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("squared_error", a, b)
    diff = a.data - b.data
    return _emit("squared_error", (a, b), np.asarray(np.sum(diff * diff)), diff=diff)


def concatenate(tensors: Sequence[Any]) -> Tensor:
    """Join along the last axis."""
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeMismatchError("concatenate: nothing to join")
    lead = parts[0].shape[:-1]
    if any(p.data.ndim != parts[0].data.ndim or p.shape[:-1] != lead for p in parts):
        raise ShapeMismatchError(f"concatenate: incompatible shapes {[p.shape for p in parts]}")
    widths = [p.shape[-1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=-1)
    return _emit("concatenate", parts, out, widths=widths)


def log_softmax(a: Any) -> Tensor:
    """Log-softmax over the last axis."""
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    return _emit("log_softmax", (a,), out, out=out)


def constant(value: Any, shape: Optional[Sequence[int]] = None) -> Tensor:
    if shape is None:
        return Tensor(np.array(value, dtype=np.float64))
    return Tensor(np.full(tuple(shape), float(value), dtype=np.float64))


def rows(bias: Any, n: int) -> Tensor:
    """Repeat a (1, w) row ``n`` times as ``ones(n, 1) @ bias``."""
    return matmul(np.ones((n, 1), dtype=np.float64), bias)


# --- vector-Jacobian products ------------------------------------------------
def _vjp_matmul(g: np.ndarray, node: Node):
    return g @ node.saved["b"].T, node.saved["a"].T @ g


def _vjp_add(g: np.ndarray, node: Node):
    return g, g


def _vjp_sub(g: np.ndarray, node: Node):
    return g, -g


def _vjp_mul(g: np.ndarray, node: Node):
    return g * node.saved["b"], g * node.saved["a"]


def _vjp_scale(g: np.ndarray, node: Node):
    return (g * node.saved["factor"],)


def _vjp_tanh(g: np.ndarray, node: Node):
    out = node.saved["out"]
    return (g * (1.0 - out * out),)


def _vjp_softplus(g: np.ndarray, node: Node):
    return (g * _sigmoid(node.saved["x"]),)


def _vjp_sum(g: np.ndarray, node: Node):
    return (np.full(node.saved["in_shape"], float(g), dtype=np.float64),)


def _vjp_mean(g: np.ndarray, node: Node):
    shape = node.saved["in_shape"]
    count = int(np.prod(shape)) if shape else 1
    return (np.full(shape, float(g) / count, dtype=np.float64),)


def _vjp_transpose(g: np.ndarray, node: Node):
    return (g.T.copy(),)


def _vjp_l2_normalize(g: np.ndarray, node: Node):
    out, norms = node.saved["out"], node.saved["norms"]
    radial = np.sum(g * out, axis=-1, keepdims=True)
    return ((g - out * radial) / norms,)


def _vjp_cosine_similarity(g: np.ndarray, node: Node):
    s = node.saved
    g = np.asarray(g)[..., None]
    ga = g * (s["b"] / (s["na"] * s["nb"]) - s["cos"] * s["a"] / (s["na"] ** 2))
    gb = g * (s["a"] / (s["na"] * s["nb"]) - s["cos"] * s["b"] / (s["nb"] ** 2))
    return ga, gb


def _vjp_squared_error(g: np.ndarray, node: Node):
    d = 2.0 * float(g) * node.saved["diff"]
    return d, -d


def _vjp_concatenate(g: np.ndarray, node: Node):
    splits = np.cumsum(node.saved["widths"])[:-1]
    return tuple(np.split(g, splits, axis=-1))


def _vjp_log_softmax(g: np.ndarray, node: Node):
    probs = np.exp(node.saved["out"])
    return (g - probs * np.sum(g, axis=-1, keepdims=True),)


VJPS: Dict[str, VJP] = {
    "matmul": _vjp_matmul,
    "add": _vjp_add,
    "sub": _vjp_sub,
    "mul": _vjp_mul,
    "scale": _vjp_scale,
    "tanh": _vjp_tanh,
    "softplus": _vjp_softplus,
    "sum": _vjp_sum,
    "mean": _vjp_mean,
    "transpose": _vjp_transpose,
    "l2_normalize": _vjp_l2_normalize,
    "cosine_similarity": _vjp_cosine_similarity,
    "squared_error": _vjp_squared_error,
    "concatenate": _vjp_concatenate,
    "log_softmax": _vjp_log_softmax,
}


def eval_primitive(kind: str, inputs: Sequence[Any], **params: Any) -> Tensor:
    """Evaluate a primitive by name (``scale`` takes ``factor=``)."""
    fn = {
        "matmul": matmul,
        "add": add,
        "sub": sub,
        "mul": mul,
        "tanh": tanh,
        "softplus": softplus,
        "sum": sum,
        "mean": mean,
        "transpose": transpose,
        "l2_normalize": l2_normalize,
        "cosine_similarity": cosine_similarity,
        "squared_error": squared_error,
        "log_softmax": log_softmax,
    }
    if kind == "scale":
        return scale(inputs[0], params["factor"])
    if kind == "concatenate":
        return concatenate(inputs)
    if kind not in fn:
        raise KeyError(f"Unknown primitive: {kind}")
    return fn[kind](*inputs)
