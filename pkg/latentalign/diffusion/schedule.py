"""Noise schedules, forward diffusion and clean-latent prediction."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from latentalign.autodiff import ops
from latentalign.autodiff.tensor import Tensor, as_tensor
from latentalign.errors import ScheduleError, ShapeMismatchError, TimestepError

ALPHA_BAR_FLOOR = 1e-12


@dataclass(frozen=True)
class NoiseSchedule:
    """beta_t, alpha_t = 1 - beta_t and alpha_bar_t = prod_{i<=t} alpha_i for t = 1..T.

    Arrays are indexed by ``t - 1``; ``alpha_bar(0)`` is defined as 1.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @classmethod
    def from_betas(cls, betas: Any) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 2:
            raise ScheduleError(f"Need at least two betas, got shape {betas.shape}")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ScheduleError("Every beta must lie in (0, 1)")
        alphas = 1.0 - betas
        return cls(T=int(betas.size), betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))

    def check_t(self, t: int) -> int:
        if not 1 <= int(t) <= self.T:
            raise TimestepError(f"Timestep {t} outside [1, {self.T}]")
        return int(t)

    def alpha_bar(self, t: int) -> float:
        if int(t) == 0:
            return 1.0
        return float(self.alpha_bars[self.check_t(t) - 1])

    def same_grid(self, other: "NoiseSchedule") -> bool:
        return self.T == other.T and np.array_equal(self.betas, other.betas)


def make_linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Betas linearly spaced from ``beta_start`` to ``beta_end`` inclusive."""
    if T < 2:
        raise ScheduleError(f"T must be at least 2, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ScheduleError(f"Need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, T))


def inference_timesteps(schedule: NoiseSchedule, n_steps: int) -> np.ndarray:
    """``n_steps`` distinct timesteps from T down to 1, evenly spaced."""
    if n_steps < 1 or n_steps > schedule.T:
        raise ScheduleError(f"Cannot take {n_steps} inference steps from a {schedule.T}-step schedule")
    return np.rint(np.linspace(schedule.T, 1, n_steps)).astype(np.int64)


def q_sample(z0: Any, t: int, eps: Any, schedule: NoiseSchedule) -> Tensor:
    """z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps."""
    z0, eps = as_tensor(z0), as_tensor(eps)
    if z0.shape != eps.shape:
        raise ShapeMismatchError(f"q_sample: latent {z0.shape} and noise {eps.shape} differ")
    a_bar = schedule.alpha_bar(schedule.check_t(t))
    return ops.add(ops.scale(z0, np.sqrt(a_bar)), ops.scale(eps, np.sqrt(1.0 - a_bar)))


def predict_z0(z_t: Any, eps_hat: Any, t: int, schedule: NoiseSchedule) -> Tensor:
    """Clean-latent estimate (1/sqrt(a)) z_t - sqrt((1 - a)/a) eps_hat with a = alpha_bar_t."""
    z_t, eps_hat = as_tensor(z_t), as_tensor(eps_hat)
    if z_t.shape != eps_hat.shape:
        raise ShapeMismatchError(f"predict_z0: latent {z_t.shape} and noise {eps_hat.shape} differ")
    a_bar = schedule.alpha_bar(schedule.check_t(t))
    if a_bar < ALPHA_BAR_FLOOR:
        raise ScheduleError(f"alpha_bar at t={t} is {a_bar:g}; schedule is too long for z0 prediction")
    return ops.sub(ops.scale(z_t, 1.0 / np.sqrt(a_bar)), ops.scale(eps_hat, np.sqrt((1.0 - a_bar) / a_bar)))
