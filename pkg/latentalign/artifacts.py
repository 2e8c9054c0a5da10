"""Where each subcommand reads and writes its files, and loaders for them."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from latentalign.aligner.pipeline import AlignerModels, ModalityModels
from latentalign.checkpoint import load_checkpoint
from latentalign.config import ExperimentConfig
from latentalign.database import results_path
from latentalign.errors import MissingArtifactError
from latentalign.models.autoencoder import Autoencoder
from latentalign.models.binder import BinderModel
from latentalign.models.denoiser import DenoiserModel
from latentalign.world import Dataset, key_frame, load_dataset

TRAIN_FILE = "train.shds"
HELDOUT_FILE = "heldout.shds"
BINDER_FILE = "binder.shla"
REPORT_FILE = "report.csv"
SWEEP_FILE = "sweep.csv"


def dataset_paths(cfg: ExperimentConfig) -> Tuple[Path, Path]:
    return Path(cfg.data_dir) / TRAIN_FILE, Path(cfg.data_dir) / HELDOUT_FILE


def denoiser_path(cfg: ExperimentConfig, modality: str) -> Path:
    return Path(cfg.checkpoint_dir) / f"denoiser_{modality}.shla"


def autoencoder_path(cfg: ExperimentConfig, modality: str) -> Path:
    return Path(cfg.checkpoint_dir) / f"autoencoder_{modality}.shla"


def binder_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.checkpoint_dir) / BINDER_FILE


def store_path(cfg: ExperimentConfig) -> Path:
    return results_path(cfg.out_dir)


def load_splits(cfg: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    train, heldout = dataset_paths(cfg)
    for path in (train, heldout):
        if not path.exists():
            raise MissingArtifactError(f"Dataset not found: {path} (run `latentalign gen-data` first)")
    return load_dataset(train), load_dataset(heldout)


def load_models(cfg: ExperimentConfig) -> Tuple[AlignerModels, BinderModel]:
    branches = {}
    for modality in ("v", "a"):
        denoiser = load_checkpoint(denoiser_path(cfg, modality), DenoiserModel.kind)
        autoencoder = load_checkpoint(autoencoder_path(cfg, modality), Autoencoder.kind)
        branches[modality] = ModalityModels(denoiser=denoiser, autoencoder=autoencoder)
    binder = load_checkpoint(binder_path(cfg), BinderModel.kind)
    return AlignerModels(**branches), binder


def reference_samples(heldout: Dataset, task: str, n_frames: int) -> Dict[str, np.ndarray]:
    """Real held-out samples per modality, as the task's generated samples look (stills for a2i)."""
    v = key_frame(heldout.v, n_frames) if task == "a2i" else heldout.v
    return {"v": v, "a": heldout.a}
