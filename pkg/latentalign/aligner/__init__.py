"""Inference-time alignment of diffusion latents in the binder's embedding space."""
from latentalign.aligner.guidance import descend, guide_step, prompt_tune_step
from latentalign.aligner.losses import cross_guidance_loss, joint_guidance_loss
from latentalign.aligner.pipeline import (
    AlignerModels,
    GenerationResult,
    ModalityModels,
    StepRecord,
    run_cross_modal,
    run_generation,
    run_joint,
    run_vanilla,
)

__all__ = [
    "AlignerModels",
    "GenerationResult",
    "ModalityModels",
    "StepRecord",
    "cross_guidance_loss",
    "descend",
    "guide_step",
    "joint_guidance_loss",
    "prompt_tune_step",
    "run_cross_modal",
    "run_generation",
    "run_joint",
    "run_vanilla",
]
