"""Unguided reverse diffusion over an evenly respaced timestep grid."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, List

import numpy as np

from latentalign.diffusion.schedule import NoiseSchedule, inference_timesteps, predict_z0
from latentalign.errors import ScheduleError, WidthMismatchError

SAMPLERS = ("ddim", "ddpm")


@dataclass
class LatentTrajectory:
    """Latents z_T .. z_0 together with the timesteps they were taken at (0 for the final latent)."""

    latents: List[np.ndarray] = field(default_factory=list)
    timesteps: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.latents)

    @property
    def final(self) -> np.ndarray:
        return self.latents[-1]


def prompt_rows(y: Any, batch: int, width: int) -> np.ndarray:
    """Repeat a single prompt embedding over ``batch`` rows."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if y.shape[1] != width:
        raise WidthMismatchError(f"prompt embedding width {y.shape[1]} does not match {width}")
    if y.shape[0] == batch:
        return y
    if y.shape[0] != 1:
        raise WidthMismatchError(f"cannot spread {y.shape[0]} prompt rows over a batch of {batch}")
    return np.repeat(y, batch, axis=0)


def denoise_step(
    sampler_kind: str,
    model: Any,
    z_t: np.ndarray,
    t: int,
    t_prev: int,
    y: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Move ``z_t`` to timestep ``t_prev`` (0 means the clean latent).

    DDIM runs with eta = 0. DDPM uses the posterior of the respaced chain,
    with beta'_t = 1 - alpha_bar_t / alpha_bar_prev and fixed variance
    (1 - alpha_bar_prev) / (1 - alpha_bar_t) * beta'_t; noise is drawn only
    when ``t_prev > 0``.
    """
    if sampler_kind not in SAMPLERS:
        raise ScheduleError(f"Unknown sampler: {sampler_kind}")
    z_t = np.asarray(z_t, dtype=np.float64)
    y = prompt_rows(y, z_t.shape[0], model.prompt_dim)
    eps_hat = model.forward(z_t, t, y).data
    z0_hat = predict_z0(z_t, eps_hat, t, schedule).data

    a_bar = schedule.alpha_bar(t)
    a_prev = schedule.alpha_bar(t_prev)
    if sampler_kind == "ddim":
        return np.sqrt(a_prev) * z0_hat + np.sqrt(1.0 - a_prev) * eps_hat

    beta = 1.0 - a_bar / a_prev
    mean = (np.sqrt(a_prev) * beta / (1.0 - a_bar)) * z0_hat + (np.sqrt(1.0 - beta) * (1.0 - a_prev) / (1.0 - a_bar)) * z_t
    if t_prev == 0:
        return mean
    variance = (1.0 - a_prev) / (1.0 - a_bar) * beta
    return mean + np.sqrt(variance) * rng.standard_normal(z_t.shape)


def step_pairs(schedule: NoiseSchedule, n_steps: int) -> List[tuple[int, int]]:
    """(t, t_prev) for every denoising step, in sampling order."""
    ts = [int(t) for t in inference_timesteps(schedule, n_steps)]
    return list(zip(ts, ts[1:] + [0]))


def sample_vanilla(
    model: Any,
    y: Any,
    schedule: NoiseSchedule,
    n_steps: int,
    sampler_kind: str = "ddim",
    seed: int = 33,
    batch: int = 1,
) -> LatentTrajectory:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((batch, model.latent_dim))
    y = prompt_rows(y, batch, model.prompt_dim)
    trajectory = LatentTrajectory([z], [schedule.T])
    for t, t_prev in step_pairs(schedule, n_steps):
        z = denoise_step(sampler_kind, model, z, t, t_prev, y, schedule, rng)
        trajectory.latents.append(z)
        trajectory.timesteps.append(t_prev)
    return trajectory
