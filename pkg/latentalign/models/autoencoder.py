"""Latent autoencoders: identity, or an affine map fitted by PCA whitening."""
from __future__ import annotations

from typing import Any, Dict, Literal, Mapping

import numpy as np

from latentalign.autodiff import ops
from latentalign.autodiff.nn import Module, Weights
from latentalign.autodiff.tensor import Tensor, as_tensor
from latentalign.errors import EmptyDatasetError, WidthMismatchError

AutoencoderKind = Literal["identity", "affine"]


class Autoencoder(Module):
    """Encoder E: data -> latent and decoder D: latent -> data."""

    kind = "autoencoder"

    def __init__(self, mode: AutoencoderKind, data_dim: int, latent_dim: int, params: Dict[str, np.ndarray] | None = None):
        super().__init__(params or {})
        if mode == "identity" and data_dim != latent_dim:
            raise WidthMismatchError(f"Identity autoencoder needs equal widths, got {data_dim} and {latent_dim}")
        self.mode = mode
        self.data_dim = data_dim
        self.latent_dim = latent_dim

    @classmethod
    def identity(cls, dim: int) -> "Autoencoder":
        return cls("identity", dim, dim)

    def attributes(self) -> Dict[str, Any]:
        return {"mode": self.mode, "data_dim": self.data_dim, "latent_dim": self.latent_dim}

    @classmethod
    def from_state(cls, attributes: Mapping[str, Any], tensors: Mapping[str, np.ndarray]) -> "Autoencoder":
        return cls(attributes["mode"], int(attributes["data_dim"]), int(attributes["latent_dim"]), dict(tensors))

    def encode(self, x: Any, weights: Weights | None = None) -> Tensor:
        return self._apply("enc", as_tensor(x), self.data_dim, weights)

    def decode(self, z: Any, weights: Weights | None = None) -> Tensor:
        return self._apply("dec", as_tensor(z), self.latent_dim, weights)

    def _apply(self, prefix: str, x: Tensor, width: int, weights: Weights | None) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != width:
            raise WidthMismatchError(f"{prefix}: expected rows of width {width}, got shape {x.shape}")
        if self.mode == "identity":
            return x
        w = weights if weights is not None else self.weights()
        return ops.add(ops.matmul(x, w[f"{prefix}.w"]), ops.rows(w[f"{prefix}.b"], x.shape[0]))


def autoencode(ae: Autoencoder, x: Any, direction: Literal["encode", "decode"]) -> Tensor:
    if direction == "encode":
        return ae.encode(x)
    if direction == "decode":
        return ae.decode(x)
    raise ValueError(f"Unknown direction: {direction}")


def fit_autoencoder(x: np.ndarray, kind: AutoencoderKind = "affine", latent_dim: int | None = None) -> Autoencoder:
    """Fit E/D on data rows ``x``.

    The affine fit keeps the top ``latent_dim`` principal directions and whitens
    them, so latents have unit variance per coordinate; D inverts E exactly on
    the retained subspace.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise EmptyDatasetError(f"Need at least two data rows to fit an autoencoder, got shape {x.shape}")
    n, d = x.shape
    if kind == "identity":
        return Autoencoder.identity(d)

    k = latent_dim or d
    if k > min(n - 1, d):
        raise WidthMismatchError(f"latent_dim {k} exceeds the rank available from {n} rows of width {d}")

    mean = x.mean(axis=0, keepdims=True)
    _, singular, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = vt[:k]
    scale = singular[:k] / np.sqrt(n - 1)
    scale = np.where(scale > 1e-12, scale, 1.0)

    enc_w = components.T / scale
    params = {
        "enc.w": enc_w,
        "enc.b": -mean @ enc_w,
        "dec.w": components * scale[:, None],
        "dec.b": mean.copy(),
    }
    return Autoencoder("affine", d, k, params)


def reconstruction_rms(ae: Autoencoder, x: np.ndarray) -> float:
    recon = ae.decode(ae.encode(x)).data
    return float(np.sqrt(np.mean((recon - np.asarray(x)) ** 2)))
