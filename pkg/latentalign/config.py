import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from latentalign import __version__
from latentalign.errors import ConfigError, UnknownConfigKeyError

Task = Literal["v2a", "a2v", "i2a", "a2i", "joint"]
Modality = Literal["v", "a"]
SamplerKind = Literal["ddim", "ddpm"]
PromptSource = Literal["none", "class", "retrieved"]

ENV_PREFIX = "LATENTALIGN_"

# Per-task defaults. The latent step size belongs to the generator being
# steered: lambda1_v for modality V, lambda1_a for modality A.
TASK_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "v2a": {"optim_start": 0.2, "prompt_tuning": False},
    "a2v": {"optim_start": 0.0, "prompt_tuning": True},
    "i2a": {"optim_start": 0.2, "prompt_tuning": False},
    "a2i": {"optim_start": 0.0, "prompt_tuning": True},
    "joint": {"optim_start": 0.0, "prompt_tuning": True},
}
GENERATED_MODALITY: Dict[str, str] = {"v2a": "a", "i2a": "a", "a2v": "v", "a2i": "v"}
CONDITION_MODALITY: Dict[str, str] = {"v2a": "v", "i2a": "v", "a2v": "a", "a2i": "a"}


class Settings(BaseSettings):
    # Logging
    log_level: str = "INFO"

    # Worker pool for run/sweep; 1 keeps everything in-process
    workers: int = 1

    # tqdm progress bars
    progress: bool = True

    # Result store file name inside the output directory
    results_db_name: str = "results.db"

    model_config = SettingsConfigDict(env_prefix=ENV_PREFIX, env_file=".env", case_sensitive=False, extra="ignore")


settings = Settings()


class TrainConfig(BaseModel):
    epochs: int = Field(60, gt=0)
    batch_size: int = Field(128, gt=0)
    learning_rate: float = Field(2e-3, gt=0)
    seed: int = Field(33, ge=0)


class GuidanceConfig(BaseModel):
    """The knobs of one guided generation, cross-modal or joint."""

    task: Task = "v2a"
    lambda1_v: float = Field(0.01, ge=0)
    lambda1_a: float = Field(0.1, ge=0)
    lambda2: float = Field(0.01, ge=0)
    num_optim_steps: int = Field(1, ge=0)
    inf_steps: int = Field(30, gt=0)
    optim_start: float = Field(0.2, ge=0, le=1)
    prompt_tuning: bool = False
    grad_through_denoiser: bool = True
    sampler: SamplerKind = "ddim"
    prompt_source: PromptSource = "none"
    seed: int = Field(33, ge=0)

    @classmethod
    def for_task(cls, task: str, **overrides: Any) -> "GuidanceConfig":
        values = {"task": task, **TASK_DEFAULTS[task]}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def rate_for(self, modality: str) -> float:
        return self.lambda1_v if modality == "v" else self.lambda1_a

    @property
    def first_guided_index(self) -> int:
        """Index (from the start of denoising) of the first guided step."""
        return int(math.floor(self.optim_start * self.inf_steps))

    @property
    def guided_step_count(self) -> int:
        return self.inf_steps - self.first_guided_index

    def is_noop(self) -> bool:
        rates = (self.lambda1_v, self.lambda1_a) if self.task == "joint" else (self.rate_for(GENERATED_MODALITY[self.task]),)
        tuning = self.prompt_tuning and self.lambda2 > 0
        return self.num_optim_steps == 0 or (all(r == 0 for r in rates) and not tuning)


class ExperimentConfig(BaseSettings):
    """Every knob of an experiment, as flat scalar keys."""

    # Synthetic world
    factor_dim: int = Field(4, ge=1)
    num_classes: int = Field(8, ge=2)
    dim_v: int = Field(32, ge=1)
    dim_a: int = Field(32, ge=1)
    world_hidden: int = Field(16, ge=1)
    noise_sigma: float = Field(0.05, ge=0)
    factor_jitter: float = Field(0.15, ge=0)
    map_seed_v: int = Field(101, ge=0)
    map_seed_a: int = Field(202, ge=0)
    n_frames: int = Field(4, ge=1)
    train_per_class: int = Field(256, ge=1)
    heldout_per_class: int = Field(32, ge=1)

    # Autoencoders and denoisers
    autoencoder_kind: Literal["affine", "identity"] = "affine"
    latent_dim: int = Field(16, ge=1)
    diffusion_steps: int = Field(1000, ge=2)
    beta_start: float = Field(1e-4, gt=0, lt=1)
    beta_end: float = Field(0.02, gt=0, lt=1)
    hidden_width: int = Field(64, ge=1)
    time_dim: int = Field(16, ge=2)
    prompt_dim: int = Field(8, ge=1)
    cond_drop: float = Field(0.1, ge=0, lt=1)
    denoiser_epochs: int = Field(80, gt=0)
    denoiser_batch_size: int = Field(128, gt=0)
    denoiser_lr: float = Field(2e-3, gt=0)

    # Binder
    embed_dim: int = Field(16, ge=1)
    tau: float = Field(0.07, gt=0)
    binder_epochs: int = Field(40, gt=0)
    binder_batch_size: int = Field(128, ge=2)
    binder_lr: float = Field(2e-3, gt=0)

    # Guidance
    task: Task = "v2a"
    lambda1: Optional[float] = Field(None, ge=0)
    lambda1_v: float = Field(0.01, ge=0)
    lambda1_a: float = Field(0.1, ge=0)
    lambda2: float = Field(0.01, ge=0)
    num_optim_steps: int = Field(1, ge=0)
    inf_steps: int = Field(30, gt=0)
    optim_start: Optional[float] = Field(None, ge=0, le=1)
    prompt_tuning: Optional[bool] = None
    grad_through_denoiser: bool = True
    sampler: SamplerKind = "ddim"
    prompt_source: PromptSource = "none"

    # Runs
    seed: int = Field(33, ge=0)
    runs: int = Field(64, ge=1)

    # Paths
    data_dir: Path = Path("./data")
    checkpoint_dir: Path = Path("./checkpoints")
    out_dir: Path = Path("./results")

    # Sweep grid (comma-separated)
    sweep_lambda1: str = "0,0.01,0.1"
    sweep_optim_start: str = "0,0.2"
    sweep_num_optim_steps: str = "1"

    model_config = SettingsConfigDict(env_prefix=ENV_PREFIX, case_sensitive=False, extra="forbid")

    def guidance(self, **overrides: Any) -> GuidanceConfig:
        values: Dict[str, Any] = {
            "lambda1_v": self.lambda1 if self.lambda1 is not None else self.lambda1_v,
            "lambda1_a": self.lambda1 if self.lambda1 is not None else self.lambda1_a,
            "lambda2": self.lambda2,
            "num_optim_steps": self.num_optim_steps,
            "inf_steps": self.inf_steps,
            "optim_start": self.optim_start,
            "prompt_tuning": self.prompt_tuning,
            "grad_through_denoiser": self.grad_through_denoiser,
            "sampler": self.sampler,
            "prompt_source": self.prompt_source,
            "seed": self.seed,
        }
        values.update(overrides)
        task = values.pop("task", self.task)
        try:
            return GuidanceConfig.for_task(task, **values)
        except ValidationError as e:
            raise ConfigError(f"Invalid guidance settings: {e}") from e

    def denoiser_train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.denoiser_epochs,
            batch_size=self.denoiser_batch_size,
            learning_rate=self.denoiser_lr,
            seed=self.seed,
        )

    def binder_train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.binder_epochs,
            batch_size=self.binder_batch_size,
            learning_rate=self.binder_lr,
            seed=self.seed,
        )

    def sweep_grid(self) -> List[Tuple[float, float, int]]:
        try:
            lambdas = [float(x) for x in self.sweep_lambda1.split(",") if x.strip()]
            starts = [float(x) for x in self.sweep_optim_start.split(",") if x.strip()]
            steps = [int(x) for x in self.sweep_num_optim_steps.split(",") if x.strip()]
        except ValueError as e:
            raise ConfigError(f"Unparsable sweep grid: {e}") from e
        return [(lam, start, n) for lam in lambdas for start in starts for n in steps]


@dataclass
class ResolvedConfig:
    config: ExperimentConfig
    provenance: Dict[str, str]

    def echo(self) -> Dict[str, Any]:
        """The fully resolved config as embedded into every artifact."""
        values = self.config.model_dump(mode="json")
        return {
            "version": __version__,
            "config": values,
            "provenance": dict(sorted(self.provenance.items())),
        }


def read_config_file(path: Path) -> Dict[str, str]:
    """Read a flat ``key = value`` file; unknown keys are errors."""
    if not Path(path).exists():
        raise ConfigError(f"Config file not found: {path}")
    raw = dotenv_values(path)
    values: Dict[str, str] = {}
    for key, value in raw.items():
        name = key.strip().lower()
        if name not in ExperimentConfig.model_fields:
            raise UnknownConfigKeyError(key.strip())
        if value is None:
            raise ConfigError(f"Config key {key!r} has no value")
        values[name] = value.strip()
    return values


def parse_config(path: Optional[Path] = None, flags: Optional[Mapping[str, Any]] = None) -> ResolvedConfig:
    """Resolve defaults < environment < config file < CLI flags."""
    file_values = read_config_file(path) if path else {}
    flag_values = {k: v for k, v in (flags or {}).items() if v is not None}
    for key in flag_values:
        if key not in ExperimentConfig.model_fields:
            raise UnknownConfigKeyError(key)

    try:
        config = ExperimentConfig(**{**file_values, **flag_values})
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e

    env_keys = {k.upper() for k in os.environ}
    provenance: Dict[str, str] = {}
    for name in ExperimentConfig.model_fields:
        if name in flag_values:
            provenance[name] = "flag"
        elif name in file_values:
            provenance[name] = "file"
        elif f"{ENV_PREFIX}{name.upper()}" in env_keys:
            provenance[name] = "env"
        else:
            provenance[name] = "default"
    return ResolvedConfig(config=config, provenance=provenance)
