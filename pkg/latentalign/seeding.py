"""Seeding policy: one master seed, every stream derived by hashing.

``derive_seed(master, *keys)`` is SHA-256 over the decimal/str rendering of
the key tuple, truncated to 63 bits. The rendering is fixed so streams stay
stable across versions.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *keys: object) -> int:
    text = "/".join([str(int(master)), *(str(k) for k in keys)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def rng_for(master: int, *keys: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))
