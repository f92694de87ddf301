"""Observation encoder: a small dense image branch plus raw joints.

Each observation step's image (values in [0, 1]) is flattened and passed
through dense(128) -> ReLU -> dense(64); the 12 joint values pass through
unchanged. Per-step features are concatenated and the To steps stacked,
giving an embedding of dimension To * (64 + 12).
"""

from __future__ import annotations

import numpy as np

from .nn import Linear, Param, relu

__all__ = ["ObsEncoder"]


class ObsEncoder:
    IMAGE_FEATURES = 64
    HIDDEN = 128

    def __init__(self, image_hw: tuple[int, int], obs_horizon: int, rng: np.random.Generator, dtype=np.float32):
        self.image_hw = tuple(image_hw)
        self.obs_horizon = obs_horizon
        n_px = image_hw[0] * image_hw[1]
        self.fc1 = Linear(n_px, self.HIDDEN, rng, "enc.fc1", dtype)
        self.fc2 = Linear(self.HIDDEN, self.IMAGE_FEATURES, rng, "enc.fc2", dtype)
        self.dtype = dtype
        self._cache = None

    @property
    def out_dim(self) -> int:
        return self.obs_horizon * (self.IMAGE_FEATURES + 12)

    def forward(self, images: np.ndarray, joints: np.ndarray) -> np.ndarray:
        """(B, To, H, W) images + (B, To, 12) joints -> (B, To*(64+12))."""
        B, To, H, W = images.shape
        flat = images.reshape(B * To, H * W).astype(self.dtype, copy=False)
        h1 = self.fc1.forward(flat)
        a1 = relu(h1)
        feat = self.fc2.forward(a1)
        emb = np.concatenate([feat.reshape(B, To, -1), joints], axis=2).reshape(B, -1)
        self._cache = (B, To, h1)
        return emb.astype(self.dtype, copy=False)

    def backward(self, demb: np.ndarray) -> None:
        """Propagate gradient of the embedding into the image branch."""
        B, To, h1 = self._cache
        per_step = demb.reshape(B, To, self.IMAGE_FEATURES + 12)
        dfeat = per_step[:, :, : self.IMAGE_FEATURES].reshape(B * To, -1)
        da1 = self.fc2.backward(np.ascontiguousarray(dfeat))
        self.fc1.backward(da1 * (h1 > 0))

    def params(self) -> list[Param]:
        return self.fc1.params() + self.fc2.params()
