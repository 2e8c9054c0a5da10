"""Toy conditional noise predictor eps_theta(z_t, t, y) and its training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
from tqdm import tqdm

from latentalign.autodiff import ops
from latentalign.autodiff.nn import Module, Weights, batches, init_mlp, mlp
from latentalign.autodiff.optim import OptimizerState, adam_step
from latentalign.autodiff.tensor import GradGraph, Tensor, as_tensor
from latentalign.config import TrainConfig, settings
from latentalign.diffusion.schedule import NoiseSchedule, q_sample
from latentalign.errors import EmptyDatasetError, WidthMismatchError
from latentalign.models.autoencoder import Autoencoder

logger = logging.getLogger(__name__)


def time_features(t: Any, dim: int) -> np.ndarray:
    """Sinusoidal features [sin(t f_k), cos(t f_k)] with geometric frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    args = t[:, None] * freqs[None, :]
    feats = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if feats.shape[1] < dim:
        feats = np.concatenate([feats, np.zeros((t.size, dim - feats.shape[1]))], axis=1)
    return feats


class DenoiserModel(Module):
    """MLP over [z_t, time features, prompt embedding] predicting the added noise.

    The prompt table has ``num_classes + 1`` rows; the last row is the null
    (unconditional) prompt.
    """

    kind = "denoiser"

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        schedule: NoiseSchedule,
        latent_dim: int,
        num_classes: int,
        time_dim: int = 16,
        prompt_dim: int = 8,
    ):
        super().__init__(params)
        self.schedule = schedule
        self.latent_dim = latent_dim
        self.num_classes = num_classes
        self.time_dim = time_dim
        self.prompt_dim = prompt_dim

    @classmethod
    def create(
        cls,
        latent_dim: int,
        num_classes: int,
        schedule: NoiseSchedule,
        seed: int,
        hidden_width: int = 64,
        hidden_layers: int = 3,
        time_dim: int = 16,
        prompt_dim: int = 8,
    ) -> "DenoiserModel":
        rng = np.random.default_rng(seed)
        widths = [latent_dim + time_dim + prompt_dim] + [hidden_width] * hidden_layers + [latent_dim]
        params = init_mlp(rng, "net", widths)
        # Zero output layer: an untrained model predicts eps = 0.
        params[f"net.w{hidden_layers}"] = np.zeros((hidden_width, latent_dim))
        params["prompt.table"] = rng.normal(0.0, 1.0, size=(num_classes + 1, prompt_dim))
        return cls(params, schedule, latent_dim, num_classes, time_dim, prompt_dim)

    @property
    def null_class(self) -> int:
        return self.num_classes

    def attributes(self) -> Dict[str, Any]:
        return {
            "latent_dim": self.latent_dim,
            "num_classes": self.num_classes,
            "time_dim": self.time_dim,
            "prompt_dim": self.prompt_dim,
        }

    def buffers(self) -> Dict[str, np.ndarray]:
        return {"schedule.betas": self.schedule.betas}

    @classmethod
    def from_state(cls, attributes: Mapping[str, Any], tensors: Mapping[str, np.ndarray]) -> "DenoiserModel":
        params = {k: v for k, v in tensors.items() if not k.startswith("schedule.")}
        return cls(
            params,
            NoiseSchedule.from_betas(tensors["schedule.betas"]),
            int(attributes["latent_dim"]),
            int(attributes["num_classes"]),
            int(attributes["time_dim"]),
            int(attributes["prompt_dim"]),
        )

    def prompt_embedding(self, class_id: Optional[int]) -> np.ndarray:
        """Row of the prompt table as a (1, prompt_dim) array; None selects the null prompt."""
        row = self.null_class if class_id is None else int(class_id)
        return self.params["prompt.table"][row:row + 1].copy()

    def forward(self, z_t: Any, t: Any, y: Any, weights: Weights | None = None) -> Tensor:
        z_t, y = as_tensor(z_t), as_tensor(y)
        if z_t.data.ndim != 2 or z_t.shape[1] != self.latent_dim:
            raise WidthMismatchError(f"denoiser: latent width {self.latent_dim} expected, got shape {z_t.shape}")
        if y.shape != (z_t.shape[0], self.prompt_dim):
            raise WidthMismatchError(f"denoiser: prompt embedding of shape {(z_t.shape[0], self.prompt_dim)} expected, got {y.shape}")
        n = z_t.shape[0]
        t = np.broadcast_to(np.asarray(t), (n,))
        feats = Tensor(time_features(t, self.time_dim))
        w = weights if weights is not None else self.weights()
        return mlp(w, "net", ops.concatenate([z_t, feats, y]))

    def predict_eps(self, z_t: np.ndarray, t: int, y: np.ndarray) -> np.ndarray:
        return self.forward(z_t, t, y).data


def denoiser_forward(model: DenoiserModel, z_t: Any, t: Any, y: Any) -> Tensor:
    return model.forward(z_t, t, y)


@dataclass
class TrainingReport:
    epoch_losses: List[float] = field(default_factory=list)

    @property
    def first_loss(self) -> float:
        return self.epoch_losses[0] if self.epoch_losses else float("nan")

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def noise_prediction_loss(
    model: DenoiserModel,
    z0: np.ndarray,
    class_ids: Sequence[Optional[int]],
    rng: np.random.Generator,
    weights: Weights | None = None,
) -> Tensor:
    """Mean over rows of ||eps - eps_theta(z_t, t, y)||^2 at uniformly drawn t."""
    schedule = model.schedule
    n = z0.shape[0]
    t = rng.integers(1, schedule.T + 1, size=n)
    eps = rng.standard_normal(z0.shape)
    a_bar = schedule.alpha_bars[t - 1][:, None]
    z_t = np.sqrt(a_bar) * z0 + np.sqrt(1.0 - a_bar) * eps

    w = weights if weights is not None else model.weights()
    rows = np.array([model.null_class if c is None else c for c in class_ids], dtype=np.int64)
    onehot = np.zeros((n, model.num_classes + 1))
    onehot[np.arange(n), rows] = 1.0
    y = ops.matmul(onehot, w["prompt.table"])
    eps_hat = model.forward(z_t, t, y, weights=w)
    return ops.scale(ops.squared_error(eps_hat, eps), 1.0 / n)


def train_denoiser(
    model: DenoiserModel,
    x: np.ndarray,
    classes: np.ndarray,
    autoencoder: Autoencoder,
    cfg: TrainConfig,
    cond_drop: float = 0.1,
) -> tuple[DenoiserModel, TrainingReport]:
    """Minimize the noise-estimation loss over (x, class) pairs encoded to latents."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDatasetError("Cannot train a denoiser on an empty dataset")

    z0 = autoencoder.encode(x).data
    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState()
    params = dict(model.params)
    report = TrainingReport()

    epochs = tqdm(range(cfg.epochs), desc="Training denoiser", unit="epoch", disable=not settings.progress)
    for epoch in epochs:
        losses = []
        for idx in batches(len(z0), cfg.batch_size, rng):
            dropped = rng.random(len(idx)) < cond_drop
            class_ids = [None if d else int(c) for d, c in zip(dropped, classes[idx])]
            model.params = params
            with GradGraph() as graph:
                w = model.weights(graph)
                loss = noise_prediction_loss(model, z0[idx], class_ids, rng, weights=w)
                grads = graph.backward(loss)
            named = {name: grads[w[name].node_id] for name in w}
            params, state = adam_step(params, named, state, cfg.learning_rate)
            losses.append(loss.item())
        report.epoch_losses.append(float(np.mean(losses)))
        logger.debug("denoiser epoch %d loss %.5f", epoch, report.epoch_losses[-1])

    model.params = params
    logger.info("Denoiser trained: loss %.4f -> %.4f over %d epochs", report.first_loss, report.final_loss, cfg.epochs)
    return model, report
