"""Synthetic paired two-modality world and the SHDS dataset file.

Every sample starts from a factor vector c near one of C class prototypes and
is rendered into both modalities through fixed random maps

    g(c) = sin(c W1 + b1) W2 + b2

plus Gaussian observation noise. The two maps use their own seeds, so V and A
share information only through c.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel

from latentalign.errors import ClassRangeError, DatasetFormatError, EmptyDatasetError, WidthMismatchError, WorldSpecError
from latentalign.fileio import write_bytes_atomic
from latentalign.seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"SHDS"
DATASET_VERSION = 1
# magic, version, k, C, d_v, d_a, hidden, sigma, jitter, map_seed_v, map_seed_a, world_seed, n
_HEADER = struct.Struct("<4sHIIIIIddQQQQ")


class WorldSpec(BaseModel):
    factor_dim: int = 4
    num_classes: int = 8
    dim_v: int = 32
    dim_a: int = 32
    hidden: int = 16
    noise_sigma: float = 0.05
    factor_jitter: float = 0.15
    map_seed_v: int = 101
    map_seed_a: int = 202

    @classmethod
    def from_config(cls, cfg: Any) -> "WorldSpec":
        return cls(
            factor_dim=cfg.factor_dim,
            num_classes=cfg.num_classes,
            dim_v=cfg.dim_v,
            dim_a=cfg.dim_a,
            hidden=cfg.world_hidden,
            noise_sigma=cfg.noise_sigma,
            factor_jitter=cfg.factor_jitter,
            map_seed_v=cfg.map_seed_v,
            map_seed_a=cfg.map_seed_a,
        )

    def check(self) -> "WorldSpec":
        if self.factor_dim < 1:
            raise WorldSpecError(f"factor_dim must be >= 1, got {self.factor_dim}")
        if self.num_classes < 2:
            raise WorldSpecError(f"num_classes must be >= 2, got {self.num_classes}")
        if min(self.dim_v, self.dim_a) < self.factor_dim:
            raise WorldSpecError(f"modality widths ({self.dim_v}, {self.dim_a}) must be >= factor_dim {self.factor_dim}")
        if self.hidden < 1:
            raise WorldSpecError(f"hidden must be >= 1, got {self.hidden}")
        if self.noise_sigma < 0 or self.factor_jitter < 0:
            raise WorldSpecError("noise_sigma and factor_jitter must be non-negative")
        return self


@dataclass(frozen=True)
class RenderMap:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def random(cls, seed: int, k: int, hidden: int, width: int) -> "RenderMap":
        rng = np.random.default_rng(seed)
        return cls(
            w1=rng.normal(0.0, 1.5 / np.sqrt(k), size=(k, hidden)),
            b1=rng.uniform(0.0, 2.0 * np.pi, size=hidden),
            w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, width)),
            b2=rng.normal(0.0, 0.1, size=width),
        )

    def __call__(self, c: np.ndarray) -> np.ndarray:
        return np.sin(c @ self.w1 + self.b1) @ self.w2 + self.b2


@dataclass(frozen=True)
class World:
    spec: WorldSpec
    seed: int
    prototypes: np.ndarray
    g_v: RenderMap
    g_a: RenderMap

    def render(self, modality: str, c: np.ndarray) -> np.ndarray:
        return (self.g_v if modality == "v" else self.g_a)(np.asarray(c, dtype=np.float64))


@dataclass(frozen=True)
class PairedSample:
    v: np.ndarray
    a: np.ndarray
    class_id: int
    factors: np.ndarray


def make_world(spec: WorldSpec, seed: int) -> World:
    spec.check()
    rng = np.random.default_rng(seed)
    return World(
        spec=spec,
        seed=int(seed),
        prototypes=rng.normal(0.0, 1.0, size=(spec.num_classes, spec.factor_dim)),
        g_v=RenderMap.random(spec.map_seed_v, spec.factor_dim, spec.hidden, spec.dim_v),
        g_a=RenderMap.random(spec.map_seed_a, spec.factor_dim, spec.hidden, spec.dim_a),
    )


def sample_pair(world: World, class_id: int, seed: int) -> PairedSample:
    spec = world.spec
    if not 0 <= int(class_id) < spec.num_classes:
        raise ClassRangeError(f"Class {class_id} outside [0, {spec.num_classes})")
    rng = np.random.default_rng(seed)
    c = world.prototypes[int(class_id)] + spec.factor_jitter * rng.standard_normal(spec.factor_dim)
    v = world.g_v(c) + spec.noise_sigma * rng.standard_normal(spec.dim_v)
    a = world.g_a(c) + spec.noise_sigma * rng.standard_normal(spec.dim_a)
    return PairedSample(v=v, a=a, class_id=int(class_id), factors=c)


@dataclass
class Dataset:
    spec: WorldSpec
    world_seed: int
    v: np.ndarray
    a: np.ndarray
    factors: np.ndarray
    classes: np.ndarray

    def __len__(self) -> int:
        return int(self.classes.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.world_seed == other.world_seed
            and all(
                a.dtype == b.dtype and np.array_equal(a, b)
                for a, b in ((self.v, other.v), (self.a, other.a), (self.factors, other.factors), (self.classes, other.classes))
            )
        )

    def modality(self, name: str) -> np.ndarray:
        return self.v if name == "v" else self.a

    def class_histogram(self) -> Dict[int, int]:
        ids, counts = np.unique(self.classes, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}


def generate_dataset(world: World, n_per_class: int, seed: int) -> Dataset:
    """``n_per_class`` samples of every class, shuffled; sample i draws from derive_seed(seed, i)."""
    if n_per_class < 1:
        raise EmptyDatasetError(f"n_per_class must be >= 1, got {n_per_class}")
    spec = world.spec
    classes = np.repeat(np.arange(spec.num_classes, dtype=np.uint32), n_per_class)
    classes = classes[rng_for(seed, "shuffle").permutation(classes.size)]
    samples = [sample_pair(world, int(c), derive_seed(seed, i)) for i, c in enumerate(classes)]
    return Dataset(
        spec=spec,
        world_seed=world.seed,
        v=np.stack([s.v for s in samples]),
        a=np.stack([s.a for s in samples]),
        factors=np.stack([s.factors for s in samples]),
        classes=classes,
    )


def key_frame(v: np.ndarray, n_frames: int) -> np.ndarray:
    """Tile the first of ``n_frames`` equal-width frames over the whole row (a still image as a clip)."""
    v = np.asarray(v, dtype=np.float64)
    width = v.shape[-1]
    if n_frames < 1 or width % n_frames:
        raise WidthMismatchError(f"width {width} does not split into {n_frames} frames")
    frame = v[..., : width // n_frames]
    return np.concatenate([frame] * n_frames, axis=-1)


def key_frame_matrix(width: int, n_frames: int) -> np.ndarray:
    """0/1 matrix ``M`` with ``v @ M == key_frame(v, n_frames)``; lets the tape differentiate through it."""
    if n_frames < 1 or width % n_frames:
        raise WidthMismatchError(f"width {width} does not split into {n_frames} frames")
    frame = width // n_frames
    return np.tile(np.eye(width, frame), (1, n_frames))


def save_dataset(dataset: Dataset, path: Path) -> Path:
    spec = dataset.spec
    header = _HEADER.pack(
        DATASET_MAGIC,
        DATASET_VERSION,
        spec.factor_dim,
        spec.num_classes,
        spec.dim_v,
        spec.dim_a,
        spec.hidden,
        spec.noise_sigma,
        spec.factor_jitter,
        spec.map_seed_v,
        spec.map_seed_a,
        dataset.world_seed,
        len(dataset),
    )
    body = b"".join(
        np.ascontiguousarray(arr, dtype=dtype).tobytes()
        for arr, dtype in ((dataset.v, "<f8"), (dataset.a, "<f8"), (dataset.factors, "<f8"), (dataset.classes, "<u4"))
    )
    write_bytes_atomic(path, header + body)
    logger.debug("Wrote %d samples to %s", len(dataset), path)
    return Path(path)


def load_dataset(path: Path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file too short for an SHDS header")
    magic, version, k, C, d_v, d_a, hidden, sigma, jitter, seed_v, seed_a, world_seed, n = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")

    sizes = [("v", n * d_v, "<f8"), ("a", n * d_a, "<f8"), ("factors", n * k, "<f8"), ("classes", n, "<u4")]
    expected = _HEADER.size + sum(count * np.dtype(dtype).itemsize for _, count, dtype in sizes)
    if len(raw) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")

    arrays: Dict[str, np.ndarray] = {}
    offset = _HEADER.size
    for name, count, dtype in sizes:
        arrays[name] = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).copy()
        offset += count * np.dtype(dtype).itemsize

    spec = WorldSpec(
        factor_dim=k,
        num_classes=C,
        dim_v=d_v,
        dim_a=d_a,
        hidden=hidden,
        noise_sigma=sigma,
        factor_jitter=jitter,
        map_seed_v=seed_v,
        map_seed_a=seed_a,
    )
    return Dataset(
        spec=spec,
        world_seed=int(world_seed),
        v=arrays["v"].astype(np.float64).reshape(n, d_v),
        a=arrays["a"].astype(np.float64).reshape(n, d_a),
        factors=arrays["factors"].astype(np.float64).reshape(n, k),
        classes=arrays["classes"].astype(np.uint32),
    )
