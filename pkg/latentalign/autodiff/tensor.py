"""Dense float64 tensors and the taping gradient graph.

A :class:`GradGraph` records every primitive evaluated while it is active and
whose inputs depend on one of its roots. ``backward`` walks the records in
reverse insertion order, which is a valid reverse topological order because a
node can only consume nodes recorded before it.
"""
from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from latentalign.errors import NonScalarLossError

GradientMap = Dict[int, np.ndarray]

_active_graph: contextvars.ContextVar[Optional["GradGraph"]] = contextvars.ContextVar(
    "latentalign_active_graph", default=None
)


class Tensor:
    """Immutable float64 array, optionally attached to a node of a GradGraph."""

    __slots__ = ("data", "node_id", "graph")

    def __init__(self, data: Any, node_id: Optional[int] = None, graph: Optional["GradGraph"] = None):
        array = np.asarray(data, dtype=np.float64)
        self.data: np.ndarray = array
        self.node_id = node_id
        self.graph = graph

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise NonScalarLossError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same values, no graph attachment (a stop-gradient)."""
        return Tensor(self.data)

    def tracked(self) -> bool:
        """True when this tensor depends on a root of the currently active graph."""
        return self.node_id is not None and self.graph is not None and self.graph is _active_graph.get()

    # Operator sugar, delegating to the primitive set in ``ops``.
    def __add__(self, other: "Tensor") -> "Tensor":
        from latentalign.autodiff import ops

        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from latentalign.autodiff import ops

        return ops.sub(self, other)

    def __mul__(self, other: Any) -> "Tensor":
        from latentalign.autodiff import ops

        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from latentalign.autodiff import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from latentalign.autodiff import ops

        return ops.matmul(self, other)

    @property
    def T(self) -> "Tensor":
        from latentalign.autodiff import ops

        return ops.transpose(self)

    def __repr__(self) -> str:
        tag = f", node_id={self.node_id}" if self.node_id is not None else ""
        return f"Tensor(shape={self.shape}{tag})"


@dataclass
class Node:
    kind: str
    inputs: Tuple[Optional[int], ...]
    saved: Dict[str, Any]
    shape: Tuple[int, ...]


# A vector-Jacobian product: (upstream gradient, node) -> one gradient per input.
VJP = Callable[[np.ndarray, Node], Sequence[Optional[np.ndarray]]]


@dataclass
class GradGraph:
    """Tape of primitive records for one forward evaluation.

    Confined to the thread (context) that activated it. Use as a context
    manager; nested graphs shadow the outer one until they exit.
    """

    nodes: list = field(default_factory=list)
    roots: list = field(default_factory=list)
    _token: Optional[contextvars.Token] = field(default=None, repr=False)

    def __enter__(self) -> "GradGraph":
        self._token = _active_graph.set(self)
        return self

    def __exit__(self, *exc) -> None:
        if self._token is not None:
            _active_graph.reset(self._token)
            self._token = None

    def watch(self, value: Any) -> Tensor:
        """Register ``value`` as a root (a differentiable parameter)."""
        data = value.data if isinstance(value, Tensor) else value
        node_id = self._append(Node("leaf", (), {}, np.shape(data)))
        self.roots.append(node_id)
        return Tensor(np.array(data, dtype=np.float64), node_id=node_id, graph=self)

    def record(self, kind: str, inputs: Sequence[Tensor], output: np.ndarray, saved: Dict[str, Any]) -> Tensor:
        input_ids = tuple(t.node_id if t.tracked() else None for t in inputs)
        node_id = self._append(Node(kind, input_ids, saved, output.shape))
        return Tensor(output, node_id=node_id, graph=self)

    def _append(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def backward(self, loss: Tensor) -> GradientMap:
        """Reverse-mode accumulation from a scalar ``loss`` to every root."""
        from latentalign.autodiff.ops import VJPS

        if loss.size != 1:
            raise NonScalarLossError(f"backward needs a scalar loss, got shape {loss.shape}")

        grads: Dict[int, np.ndarray] = {}
        if loss.node_id is not None and loss.graph is self:
            grads[loss.node_id] = np.ones(loss.shape, dtype=np.float64)
            for node_id in range(loss.node_id, -1, -1):
                upstream = grads.get(node_id)
                node = self.nodes[node_id]
                if upstream is None or node.kind == "leaf":
                    continue
                for input_id, g in zip(node.inputs, VJPS[node.kind](upstream, node)):
                    if input_id is None or g is None:
                        continue
                    if input_id in grads:
                        grads[input_id] = grads[input_id] + g
                    else:
                        grads[input_id] = g

        return {
            root: grads.get(root, np.zeros(self.nodes[root].shape, dtype=np.float64))
            for root in self.roots
        }


def active_graph() -> Optional[GradGraph]:
    return _active_graph.get()


def backward(loss: Tensor) -> GradientMap:
    """Differentiate ``loss`` on the graph it was recorded on."""
    if loss.graph is None:
        if loss.size != 1:
            raise NonScalarLossError(f"backward needs a scalar loss, got shape {loss.shape}")
        return {}
    return loss.graph.backward(loss)


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)
