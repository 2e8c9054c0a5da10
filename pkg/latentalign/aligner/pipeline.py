"""Guided and vanilla generation for the cross-modal tasks and joint V/A generation.

Every branch (one per generated modality) draws its initial latent and any
DDPM noise from ``derive_seed(cfg.seed, modality)``, and guided and vanilla
runs share ``denoise_step``. With zero step sizes the guided loop therefore
reproduces the vanilla trajectory bit for bit.

At each guided step the current latent z_t is optimized before it is
denoised to the next timestep of the grid.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from latentalign.aligner.guidance import DescentTrace, descend, latent_update, prompt_tune_step
from latentalign.aligner.losses import cross_guidance_loss, joint_guidance_loss
from latentalign.autodiff import ops
from latentalign.autodiff.tensor import Tensor
from latentalign.config import CONDITION_MODALITY, GENERATED_MODALITY, GuidanceConfig
from latentalign.diffusion.sampling import denoise_step, step_pairs
from latentalign.diffusion.schedule import NoiseSchedule, predict_z0
from latentalign.errors import GuidanceConfigError, MissingModelError
from latentalign.models.autoencoder import Autoencoder
from latentalign.models.binder import BinderModel
from latentalign.models.denoiser import DenoiserModel
from latentalign.seeding import rng_for
from latentalign.world import key_frame, key_frame_matrix

logger = logging.getLogger(__name__)

Variant = Literal["vanilla", "guided"]
CROSS_TASKS = ("v2a", "a2v", "i2a", "a2i")


@dataclass
class ModalityModels:
    denoiser: DenoiserModel
    autoencoder: Autoencoder


@dataclass
class AlignerModels:
    v: Optional[ModalityModels] = None
    a: Optional[ModalityModels] = None

    def branch(self, modality: str) -> ModalityModels:
        models = getattr(self, modality, None)
        if models is None:
            raise MissingModelError(f"No denoiser/autoencoder loaded for modality {modality!r}")
        return models


class StepRecord(BaseModel):
    index: int
    t: int
    losses: List[float]
    alignment: float

    @property
    def loss_before(self) -> float:
        return self.losses[0]

    @property
    def loss_after(self) -> float:
        return self.losses[-1]


class GenerationResult(BaseModel):
    task: str
    variant: Variant
    seed: int
    condition_index: Optional[int] = None
    class_id: Optional[int] = None
    prompt_class: Optional[int] = None
    lambda1_v: float
    lambda1_a: float
    lambda2: float
    inf_steps: int
    optim_start: float
    num_optim_steps: int
    samples: Dict[str, List[float]]
    scores: Dict[str, float]
    alignment: float
    final_loss: float
    steps: List[StepRecord] = Field(default_factory=list)
    prompt_embeddings: Optional[Dict[str, List[float]]] = None
    duration_ms: float = 0.0

    def payload_json(self) -> str:
        """Canonical JSON without wall-clock fields."""
        return self.model_dump_json(exclude={"duration_ms"})

    def sample(self, modality: str) -> np.ndarray:
        return np.asarray(self.samples[modality], dtype=np.float64)


@dataclass
class _Branch:
    modality: str
    models: ModalityModels
    z: np.ndarray
    y: np.ndarray
    rng: np.random.Generator
    still_frames: Optional[int] = None

    @classmethod
    def start(cls, modality: str, models: ModalityModels, y: np.ndarray, seed: int, still_frames: Optional[int] = None) -> "_Branch":
        rng = rng_for(seed, modality)
        z = rng.standard_normal((1, models.denoiser.latent_dim))
        return cls(modality, models, z, y, rng, still_frames)

    def embed_estimate(self, binder: BinderModel, z: Tensor, y: Tensor, t: int, through_denoiser: bool) -> Tensor:
        """z_t -> eps_hat -> z0 estimate -> decoded sample -> binder embedding."""
        denoiser = self.models.denoiser
        eps_hat = denoiser.forward(z if through_denoiser else z.detach(), t, y)
        z0_hat = predict_z0(z, eps_hat, t, denoiser.schedule)
        x = self.models.autoencoder.decode(z0_hat)
        if self.still_frames is not None:
            x = ops.matmul(x, key_frame_matrix(x.shape[-1], self.still_frames))
        return binder.embed(self.modality, x)

    def decoded(self) -> np.ndarray:
        x = self.models.autoencoder.decode(self.z).data
        return x if self.still_frames is None else key_frame(x, self.still_frames)


def _cos(e1: np.ndarray, e2: np.ndarray) -> float:
    return float(np.sum(np.asarray(e1) * np.asarray(e2)))


def retrieve_class(binder: BinderModel, e_cond: np.ndarray) -> int:
    """The class whose prompt embedding lies nearest ``e_cond`` in binder space."""
    prompts = binder.embed_classes(np.arange(binder.num_classes))
    return int(np.argmax(prompts @ np.asarray(e_cond).reshape(-1)))


def _shared_schedule(branches: List[_Branch]) -> NoiseSchedule:
    schedule = branches[0].models.denoiser.schedule
    for branch in branches[1:]:
        if not schedule.same_grid(branch.models.denoiser.schedule):
            raise GuidanceConfigError("Joint generation needs both denoisers on the same noise schedule")
    return schedule


def _sample(
    branches: List[_Branch],
    cfg: GuidanceConfig,
    objective_at: Callable[[int], Callable[[Mapping[str, Tensor]], Tuple[Tensor, Dict[str, float]]]],
    guided: bool,
) -> List[StepRecord]:
    schedule = _shared_schedule(branches)
    first = cfg.first_guided_index
    tuning = cfg.prompt_tuning
    steps: List[StepRecord] = []

    for i, (t, t_prev) in enumerate(step_pairs(schedule, cfg.inf_steps)):
        if guided and i >= first:
            values: Dict[str, np.ndarray] = {}
            rates: Dict[str, float] = {}
            updaters = {}
            for b in branches:
                values[f"z.{b.modality}"] = b.z
                values[f"y.{b.modality}"] = b.y
                rates[f"z.{b.modality}"] = cfg.rate_for(b.modality)
                rates[f"y.{b.modality}"] = cfg.lambda2 if tuning else 0.0
                updaters[f"z.{b.modality}"] = latent_update
                updaters[f"y.{b.modality}"] = prompt_tune_step
            trace: DescentTrace = descend(values, rates, objective_at(t), cfg.num_optim_steps, updaters)
            for b in branches:
                b.z = trace.values[f"z.{b.modality}"]
                b.y = trace.values[f"y.{b.modality}"]
            steps.append(StepRecord(index=i, t=t, losses=trace.losses, alignment=trace.aux.get("alignment", float("nan"))))
            logger.debug("step %d (t=%d): loss %.5f -> %.5f", i, t, trace.losses[0], trace.losses[-1])
        for b in branches:
            b.z = denoise_step(cfg.sampler, b.models.denoiser, b.z, t, t_prev, b.y, schedule, b.rng)
    return steps


def _common_fields(cfg: GuidanceConfig, variant: str) -> Dict[str, object]:
    return {
        "task": cfg.task,
        "variant": variant,
        "seed": cfg.seed,
        "lambda1_v": cfg.lambda1_v,
        "lambda1_a": cfg.lambda1_a,
        "lambda2": cfg.lambda2,
        "inf_steps": cfg.inf_steps,
        "optim_start": cfg.optim_start,
        "num_optim_steps": cfg.num_optim_steps,
    }


def _require_binder(binder: Optional[BinderModel]) -> BinderModel:
    if binder is None:
        raise MissingModelError("No binder loaded")
    return binder


def run_cross_modal(
    condition_sample: np.ndarray,
    class_prompt: Optional[int],
    models: AlignerModels,
    binder: Optional[BinderModel],
    cfg: GuidanceConfig,
    condition_index: Optional[int] = None,
    guided: bool = True,
) -> GenerationResult:
    """Generate the missing modality for one condition sample.

    i2a conditions on the key frame of a V sample; a2i generates V and
    collapses it to its key frame, both inside the guidance loss and in the
    returned sample.
    """
    if cfg.task not in CROSS_TASKS:
        raise GuidanceConfigError(f"run_cross_modal handles {CROSS_TASKS}, not {cfg.task!r}")
    binder = _require_binder(binder)
    started = time.perf_counter()
    gen_mod, cond_mod = GENERATED_MODALITY[cfg.task], CONDITION_MODALITY[cfg.task]
    branch_models = models.branch(gen_mod)

    condition = np.atleast_2d(np.asarray(condition_sample, dtype=np.float64))
    if cfg.task == "i2a":
        condition = key_frame(condition, binder.n_frames)
    e_cond = binder.embed(cond_mod, condition).data

    prompt: Optional[int] = None
    if cfg.prompt_source == "class":
        if class_prompt is None:
            raise GuidanceConfigError("prompt_source='class' needs a class id")
        prompt = int(class_prompt)
    elif cfg.prompt_source == "retrieved":
        prompt = retrieve_class(binder, e_cond)
    e_p = binder.embed_classes([prompt]) if prompt is not None else None

    still = binder.n_frames if cfg.task == "a2i" else None
    branch = _Branch.start(gen_mod, branch_models, branch_models.denoiser.prompt_embedding(prompt), cfg.seed, still)

    def objective_at(t: int):
        def objective(watched: Mapping[str, Tensor]):
            e_gen = branch.embed_estimate(binder, watched[f"z.{gen_mod}"], watched[f"y.{gen_mod}"], t, cfg.grad_through_denoiser)
            return cross_guidance_loss(e_gen, e_cond, e_p), {"alignment": _cos(e_gen.data, e_cond)}

        return objective

    steps = _sample([branch], cfg, objective_at, guided)

    x_gen = branch.decoded()
    e_gen = binder.embed(gen_mod, x_gen).data
    scores = {"gen_cond": _cos(e_gen, e_cond)}
    if e_p is not None:
        scores["gen_prompt"] = _cos(e_gen, e_p)
    final_loss = cross_guidance_loss(e_gen, e_cond, e_p).item()

    return GenerationResult(
        **_common_fields(cfg, "guided" if guided else "vanilla"),
        condition_index=condition_index,
        class_id=None if class_prompt is None else int(class_prompt),
        prompt_class=prompt,
        samples={gen_mod: x_gen.reshape(-1).tolist()},
        scores=scores,
        alignment=scores["gen_cond"],
        final_loss=final_loss,
        steps=steps,
        prompt_embeddings={gen_mod: branch.y.reshape(-1).tolist()} if guided and cfg.prompt_tuning else None,
        duration_ms=(time.perf_counter() - started) * 1000.0,
    )


def run_joint(
    class_prompt: int,
    models: AlignerModels,
    binder: Optional[BinderModel],
    cfg: GuidanceConfig,
    guided: bool = True,
) -> GenerationResult:
    """Generate a (v, a) pair for one class prompt, steering both branches with the triangle loss."""
    if cfg.task != "joint":
        raise GuidanceConfigError(f"run_joint needs task 'joint', got {cfg.task!r}")
    binder = _require_binder(binder)
    if class_prompt is None:
        raise GuidanceConfigError("Joint generation needs a class prompt")
    started = time.perf_counter()
    prompt = int(class_prompt)
    e_p = binder.embed_classes([prompt])

    branches = [
        _Branch.start(m, models.branch(m), models.branch(m).denoiser.prompt_embedding(prompt), cfg.seed)
        for m in ("v", "a")
    ]
    v_branch, a_branch = branches

    def objective_at(t: int):
        def objective(watched: Mapping[str, Tensor]):
            e_v = v_branch.embed_estimate(binder, watched["z.v"], watched["y.v"], t, cfg.grad_through_denoiser)
            e_a = a_branch.embed_estimate(binder, watched["z.a"], watched["y.a"], t, cfg.grad_through_denoiser)
            return joint_guidance_loss(e_v, e_a, e_p), {"alignment": _cos(e_v.data, e_a.data)}

        return objective

    steps = _sample(branches, cfg, objective_at, guided)

    x_v, x_a = v_branch.decoded(), a_branch.decoded()
    e_v, e_a = binder.embed("v", x_v).data, binder.embed("a", x_a).data
    scores = {"va": _cos(e_v, e_a), "vp": _cos(e_v, e_p), "ap": _cos(e_a, e_p)}

    return GenerationResult(
        **_common_fields(cfg, "guided" if guided else "vanilla"),
        class_id=prompt,
        prompt_class=prompt,
        samples={"v": x_v.reshape(-1).tolist(), "a": x_a.reshape(-1).tolist()},
        scores=scores,
        alignment=scores["va"],
        final_loss=joint_guidance_loss(e_v, e_a, e_p).item(),
        steps=steps,
        prompt_embeddings={b.modality: b.y.reshape(-1).tolist() for b in branches} if guided and cfg.prompt_tuning else None,
        duration_ms=(time.perf_counter() - started) * 1000.0,
    )


def run_vanilla(
    condition_sample: Optional[np.ndarray],
    class_prompt: Optional[int],
    models: AlignerModels,
    binder: Optional[BinderModel],
    cfg: GuidanceConfig,
    condition_index: Optional[int] = None,
) -> GenerationResult:
    """The unguided baseline for ``cfg.task`` with the same seeds and prompts as the guided run."""
    if cfg.task == "joint":
        return run_joint(class_prompt, models, binder, cfg, guided=False)
    return run_cross_modal(condition_sample, class_prompt, models, binder, cfg, condition_index, guided=False)


def run_generation(
    variant: str,
    condition_sample: Optional[np.ndarray],
    class_prompt: Optional[int],
    models: AlignerModels,
    binder: Optional[BinderModel],
    cfg: GuidanceConfig,
    condition_index: Optional[int] = None,
) -> GenerationResult:
    guided = variant == "guided"
    if cfg.task == "joint":
        return run_joint(class_prompt, models, binder, cfg, guided=guided)
    return run_cross_modal(condition_sample, class_prompt, models, binder, cfg, condition_index, guided=guided)
