"""Shared-space embedder for modality-V, modality-A and class prompts.

Each modality has its own tanh MLP followed by L2 normalization, so all
embeddings live on the unit sphere of width ``embed_dim``. Training uses the
symmetrized InfoNCE objective summed over the pairs (v, a), (v, p), (a, p).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np
from tqdm import tqdm

from latentalign.autodiff import ops
from latentalign.autodiff.nn import Module, Weights, batches, init_mlp, mlp
from latentalign.autodiff.optim import OptimizerState, adam_step
from latentalign.autodiff.tensor import GradGraph, Tensor, as_tensor
from latentalign.config import TrainConfig, settings
from latentalign.errors import EmptyDatasetError, EmptySetError, NonUnitEmbeddingError, WidthMismatchError

logger = logging.getLogger(__name__)

BinderModality = Literal["v", "a", "p"]
MODALITIES: Tuple[str, ...] = ("v", "a", "p")
UNIT_TOLERANCE = 1e-6


class BinderModel(Module):
    kind = "binder"

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        input_dims: Mapping[str, int],
        embed_dim: int,
        tau: float = 0.07,
        n_frames: int = 1,
    ):
        super().__init__(params)
        self.input_dims = dict(input_dims)
        self.embed_dim = embed_dim
        self.tau = tau
        self.n_frames = n_frames

    @classmethod
    def create(
        cls,
        dim_v: int,
        dim_a: int,
        num_classes: int,
        seed: int,
        embed_dim: int = 16,
        hidden_width: int = 64,
        tau: float = 0.07,
        n_frames: int = 1,
    ) -> "BinderModel":
        rng = np.random.default_rng(seed)
        dims = {"v": dim_v, "a": dim_a, "p": num_classes}
        params: Dict[str, np.ndarray] = {}
        for modality in MODALITIES:
            params.update(init_mlp(rng, modality, [dims[modality], hidden_width, hidden_width, embed_dim]))
        return cls(params, dims, embed_dim, tau, n_frames)

    def attributes(self) -> Dict[str, Any]:
        return {
            "input_dims": self.input_dims,
            "embed_dim": self.embed_dim,
            "tau": self.tau,
            "n_frames": self.n_frames,
        }

    @classmethod
    def from_state(cls, attributes: Mapping[str, Any], tensors: Mapping[str, np.ndarray]) -> "BinderModel":
        return cls(
            dict(tensors),
            {k: int(v) for k, v in dict(attributes["input_dims"]).items()},
            int(attributes["embed_dim"]),
            float(attributes["tau"]),
            int(attributes.get("n_frames", 1)),
        )

    @property
    def num_classes(self) -> int:
        return self.input_dims["p"]

    def embed(self, modality: str, x: Any, weights: Weights | None = None) -> Tensor:
        """Unit-norm embedding of each row of ``x`` (a vector is treated as one row)."""
        if modality not in self.input_dims:
            raise ValueError(f"Unknown binder modality: {modality}")
        x = as_tensor(x)
        if x.data.ndim == 1:
            x = Tensor(x.data[None, :]) if x.node_id is None else x
        if x.data.ndim != 2 or x.shape[1] != self.input_dims[modality]:
            raise WidthMismatchError(f"binder {modality}: expected width {self.input_dims[modality]}, got shape {x.shape}")
        w = weights if weights is not None else self.weights()
        return ops.l2_normalize(mlp(w, modality, x))

    def prompt_onehot(self, class_ids: Any) -> np.ndarray:
        ids = np.atleast_1d(np.asarray(class_ids, dtype=np.int64))
        onehot = np.zeros((ids.size, self.num_classes))
        onehot[np.arange(ids.size), ids] = 1.0
        return onehot

    def embed_numpy(self, modality: str, x: Any) -> np.ndarray:
        return self.embed(modality, np.atleast_2d(np.asarray(x, dtype=np.float64))).data

    def embed_classes(self, class_ids: Any) -> np.ndarray:
        return self.embed("p", self.prompt_onehot(class_ids)).data


def embed(binder: BinderModel, modality: str, x: Any) -> Tensor:
    return binder.embed(modality, x)


def _check_unit(e: Tensor) -> None:
    norms = np.sqrt(np.sum(e.data * e.data, axis=-1))
    if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
        raise NonUnitEmbeddingError(f"Embedding norms {np.round(norms, 6).tolist()} are not 1")


def embedding_distance(e1: Any, e2: Any) -> Tensor:
    """F(e1, e2) = 1 - cos(e1, e2), in [0, 2]; row-wise for matrices."""
    e1, e2 = as_tensor(e1), as_tensor(e2)
    _check_unit(e1)
    _check_unit(e2)
    cos = ops.cosine_similarity(e1, e2)
    return ops.sub(ops.constant(1.0, cos.shape), cos)


def contrastive_loss(q: Any, k: Any, tau: float) -> Tensor:
    """InfoNCE with in-batch negatives, averaged over the q->k and k->q directions."""
    q, k = as_tensor(q), as_tensor(k)
    if q.shape != k.shape:
        raise WidthMismatchError(f"contrastive_loss: batches of shape {q.shape} and {k.shape}")
    n = q.shape[0]
    if n < 2:
        raise EmptySetError("contrastive_loss needs at least two pairs (no negatives otherwise)")
    logits = ops.scale(ops.matmul(q, ops.transpose(k)), 1.0 / tau)
    eye = np.eye(n)
    forward = ops.sum(ops.mul(ops.log_softmax(logits), eye))
    reverse = ops.sum(ops.mul(ops.log_softmax(ops.transpose(logits)), eye))
    return ops.scale(ops.add(forward, reverse), -0.5 / n)


@dataclass
class BinderReport:
    epoch_losses: List[float] = field(default_factory=list)
    initial_loss: float = float("nan")
    retrieval: Optional[Dict[str, float]] = None

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def binder_loss(binder: BinderModel, v: np.ndarray, a: np.ndarray, classes: np.ndarray, weights: Weights | None = None) -> Tensor:
    w = weights if weights is not None else binder.weights()
    e_v = binder.embed("v", v, w)
    e_a = binder.embed("a", a, w)
    e_p = binder.embed("p", binder.prompt_onehot(classes), w)
    return ops.add(
        ops.add(contrastive_loss(e_v, e_a, binder.tau), contrastive_loss(e_v, e_p, binder.tau)),
        contrastive_loss(e_a, e_p, binder.tau),
    )


def train_binder(
    binder: BinderModel,
    v: np.ndarray,
    a: np.ndarray,
    classes: np.ndarray,
    cfg: TrainConfig,
    heldout: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
) -> tuple[BinderModel, BinderReport]:
    """Contrastive training over paired (v, a, class) rows."""
    n = len(classes)
    if n == 0:
        raise EmptyDatasetError("Cannot train the binder on an empty dataset")
    if cfg.batch_size < 2:
        raise EmptySetError("Binder batch size must be at least 2")

    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState()
    params = dict(binder.params)
    probe = rng.permutation(n)[: min(n, 256)]
    report = BinderReport(initial_loss=binder_loss(binder, v[probe], a[probe], classes[probe]).item())

    epochs = tqdm(range(cfg.epochs), desc="Training binder", unit="epoch", disable=not settings.progress)
    for epoch in epochs:
        losses = []
        for idx in batches(n, cfg.batch_size, rng):
            if len(idx) < 2:
                continue
            binder.params = params
            with GradGraph() as graph:
                w = binder.weights(graph)
                loss = binder_loss(binder, v[idx], a[idx], classes[idx], w)
                grads = graph.backward(loss)
            params, state = adam_step(params, {name: grads[w[name].node_id] for name in w}, state, cfg.learning_rate)
            losses.append(loss.item())
        report.epoch_losses.append(float(np.mean(losses)))
        logger.debug("binder epoch %d loss %.5f", epoch, report.epoch_losses[-1])

    binder.params = params
    if heldout is not None:
        report.retrieval = retrieval_accuracy(binder, *heldout)
        logger.info(
            "Binder trained: held-out retrieval %.3f (class) / %.3f (pair), cosine gap %.3f",
            report.retrieval["class_top1"],
            report.retrieval["pair_top1"],
            report.retrieval["cosine_gap"],
        )
    return binder, report


def retrieval_accuracy(binder: BinderModel, v: np.ndarray, a: np.ndarray, classes: np.ndarray) -> Dict[str, float]:
    """Cross-modal nearest-neighbour accuracy (both directions) and matched-minus-mismatched cosine."""
    e_v = binder.embed_numpy("v", v)
    e_a = binder.embed_numpy("a", a)
    classes = np.asarray(classes)
    sims = e_v @ e_a.T
    v2a = np.argmax(sims, axis=1)
    a2v = np.argmax(sims, axis=0)
    idx = np.arange(len(classes))
    class_top1 = 0.5 * (np.mean(classes[v2a] == classes) + np.mean(classes[a2v] == classes))
    pair_top1 = 0.5 * (np.mean(v2a == idx) + np.mean(a2v == idx))
    different = classes[:, None] != classes[None, :]
    matched = float(np.mean(np.diag(sims)))
    mismatched = float(np.mean(sims[different])) if np.any(different) else float("nan")
    return {
        "class_top1": float(class_top1),
        "pair_top1": float(pair_top1),
        "matched_cosine": matched,
        "mismatched_cosine": mismatched,
        "cosine_gap": matched - mismatched,
    }
