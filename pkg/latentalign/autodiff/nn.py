"""Parameter containers and the tanh MLP shared by the toy networks."""
from __future__ import annotations

from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from latentalign.autodiff import ops
from latentalign.autodiff.tensor import GradGraph, Tensor

Weights = Mapping[str, Tensor]


class Module:
    """A named collection of float64 parameter arrays.

    ``weights()`` exposes them as constants for inference; ``weights(graph)``
    registers each as a root of ``graph`` so training can differentiate them.
    """

    kind: str = "module"

    def __init__(self, params: Dict[str, np.ndarray]):
        self.params = params

    @property
    def params(self) -> Dict[str, np.ndarray]:
        return self._params

    @params.setter
    def params(self, value: Mapping[str, np.ndarray]) -> None:
        self._params = {k: np.asarray(v, dtype=np.float64) for k, v in value.items()}
        self._constants: Optional[Dict[str, Tensor]] = None

    def weights(self, graph: Optional[GradGraph] = None) -> Dict[str, Tensor]:
        if graph is None:
            if self._constants is None:
                self._constants = {name: Tensor(value) for name, value in self._params.items()}
            return self._constants
        return {name: graph.watch(value) for name, value in self._params.items()}

    def __getstate__(self) -> Dict[str, object]:
        state = dict(self.__dict__)
        state["_constants"] = None
        return state

    def attributes(self) -> Dict[str, object]:
        """Hyper-parameters needed to rebuild the module from its tensors."""
        return {}

    def buffers(self) -> Dict[str, np.ndarray]:
        """Non-trainable arrays persisted alongside the parameters."""
        return {}

    def tensors(self) -> Dict[str, np.ndarray]:
        return {**self.params, **self.buffers()}

    @classmethod
    def from_state(cls, attributes: Mapping[str, object], tensors: Mapping[str, np.ndarray]) -> "Module":
        raise NotImplementedError

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def init_mlp(rng: np.random.Generator, prefix: str, widths: Sequence[int]) -> Dict[str, np.ndarray]:
    """Glorot-normal weights and zero biases for a chain of dense layers."""
    params: Dict[str, np.ndarray] = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        params[f"{prefix}.w{i}"] = rng.normal(0.0, std, size=(fan_in, fan_out))
        params[f"{prefix}.b{i}"] = np.zeros((1, fan_out))
    return params


def mlp_depth(params: Mapping[str, object], prefix: str) -> int:
    depth = 0
    while f"{prefix}.w{depth}" in params:
        depth += 1
    return depth


def mlp(weights: Weights, prefix: str, x: Tensor) -> Tensor:
    """Dense layers with tanh between them and a linear output layer."""
    depth = mlp_depth(weights, prefix)
    n = x.shape[0]
    h = x
    for i in range(depth):
        h = ops.add(ops.matmul(h, weights[f"{prefix}.w{i}"]), ops.rows(weights[f"{prefix}.b{i}"], n))
        if i < depth - 1:
            h = ops.tanh(h)
    return h


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches covering ``range(n)`` once."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
