"""SHLA checkpoint files: a kind tag, JSON attributes and named float64 tensors.

Layout (little-endian):

    b"SHLA" | u16 version | u16 len + kind tag | u32 len + attribute JSON
    | u32 tensor count | per tensor: u16 len + name, u8 ndim, u32 dims...
    | f64 payloads in manifest order | u64 checksum

The checksum is the first 8 bytes of BLAKE2b over the payload bytes.
"""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Type

import numpy as np

from latentalign.autodiff.nn import Module
from latentalign.errors import ChecksumError, FormatError, KindMismatchError, MissingArtifactError, TruncatedFileError
from latentalign.fileio import write_bytes_atomic
from latentalign.models.autoencoder import Autoencoder
from latentalign.models.binder import BinderModel
from latentalign.models.denoiser import DenoiserModel

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SHLA"
CHECKPOINT_VERSION = 1

MODEL_KINDS: Dict[str, Type[Module]] = {
    DenoiserModel.kind: DenoiserModel,
    Autoencoder.kind: Autoencoder,
    BinderModel.kind: BinderModel,
}


def payload_checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def encode_checkpoint(model: Module, echo: Optional[Mapping[str, Any]] = None) -> bytes:
    kind = model.kind.encode("utf-8")
    attributes = json.dumps({"model": model.attributes(), "echo": echo}, sort_keys=True).encode("utf-8")
    tensors = sorted(model.tensors().items())

    parts: List[bytes] = [
        CHECKPOINT_MAGIC,
        struct.pack("<H", CHECKPOINT_VERSION),
        struct.pack("<H", len(kind)),
        kind,
        struct.pack("<I", len(attributes)),
        attributes,
        struct.pack("<I", len(tensors)),
    ]
    for name, value in tensors:
        encoded = name.encode("utf-8")
        parts += [struct.pack("<H", len(encoded)), encoded, struct.pack("<B", value.ndim)]
        parts += [struct.pack("<I", dim) for dim in value.shape]
    payload = b"".join(np.ascontiguousarray(value, dtype="<f8").tobytes() for _, value in tensors)
    return b"".join(parts) + payload + struct.pack("<Q", payload_checksum(payload))


def save_checkpoint(model: Module, path: Path, echo: Optional[Mapping[str, Any]] = None) -> Path:
    write_bytes_atomic(path, encode_checkpoint(model, echo))
    logger.debug("Saved %s checkpoint (%d parameters) to %s", model.kind, model.parameter_count(), path)
    return Path(path)


class _Reader:
    def __init__(self, raw: bytes, path: Path):
        self.raw = raw
        self.path = path
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.raw):
            raise TruncatedFileError(f"{self.path}: file ends after {len(self.raw)} bytes, needed {self.offset + n}")
        chunk = self.raw[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(raw: bytes, path: Path) -> Tuple[str, Dict[str, Any], Dict[str, np.ndarray]]:
    reader = _Reader(raw, path)
    magic = reader.take(4)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (magic {magic!r})")
    (version,) = reader.unpack("<H")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (kind_len,) = reader.unpack("<H")
    kind = reader.take(kind_len).decode("utf-8")
    (attr_len,) = reader.unpack("<I")
    attributes = json.loads(reader.take(attr_len).decode("utf-8"))
    (count,) = reader.unpack("<I")

    manifest: List[Tuple[str, Tuple[int, ...]]] = []
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        manifest.append((name, tuple(shape)))

    start = reader.offset
    tensors: Dict[str, np.ndarray] = {}
    for name, shape in manifest:
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(reader.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    payload = raw[start:reader.offset]
    (stored,) = reader.unpack("<Q")
    if reader.offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - reader.offset} unexpected trailing bytes")
    if stored != payload_checksum(payload):
        raise ChecksumError(f"{path}: payload checksum mismatch")
    return kind, attributes, tensors


def load_checkpoint(path: Path, expected_kind: Optional[str] = None) -> Module:
    """Read a checkpoint and rebuild its model; ``expected_kind`` guards against loading the wrong file."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Checkpoint not found: {path} (run `latentalign train` first)")
    kind, attributes, tensors = decode_checkpoint(path.read_bytes(), path)
    if expected_kind is not None and kind != expected_kind:
        raise KindMismatchError(f"{path}: holds a {kind} checkpoint, expected {expected_kind}")
    if kind not in MODEL_KINDS:
        raise KindMismatchError(f"{path}: unknown model kind {kind!r}")
    return MODEL_KINDS[kind].from_state(attributes["model"], tensors)


def checkpoint_echo(path: Path) -> Optional[Dict[str, Any]]:
    _, attributes, _ = decode_checkpoint(Path(path).read_bytes(), Path(path))
    return attributes.get("echo")
