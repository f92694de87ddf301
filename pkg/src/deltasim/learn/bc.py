"""Behavior-cloning baseline: MSE regression onto the execution horizon.

The network regresses the first Ta actions of each window from the
observation embedding through a plain MLP, so its prediction converges to
the conditional mean of the demonstrated actions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import NormStats, WindowConfig
from ..errors import NonFiniteLoss
from .diffusion import ACTION_DIM, TrainConfig
from .encoder import ObsEncoder
from .nn import AdamW, Mlp, Param

__all__ = ["MlpConfig", "BcPolicy"]


@dataclass(frozen=True)
class MlpConfig:
    """Hidden widths for the BC/IBC baselines (full-scale defaults)."""

    hidden: tuple[int, ...] = (1024, 1024, 512, 256)


class BcPolicy:
    algo = "bc"

    def __init__(
        self,
        window: WindowConfig,
        stats: NormStats,
        cfg: MlpConfig = MlpConfig(),
        train_cfg: TrainConfig = TrainConfig(),
        image_hw: tuple[int, int] = (32, 32),
        dtype=np.float32,
    ):
        self.window = window
        self.stats = stats
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.image_hw = tuple(image_hw)
        self.dtype = dtype
        self.out_dim = window.exec_horizon * ACTION_DIM
        rng = np.random.default_rng(np.random.SeedSequence(train_cfg.seed))
        self.encoder = ObsEncoder(image_hw, window.obs_horizon, rng, dtype)
        self.net = Mlp((self.encoder.out_dim, *cfg.hidden, self.out_dim), rng, "bc", dtype)

    def params(self) -> list[Param]:
        return self.encoder.params() + self.net.params()

    def config_dict(self) -> dict:
        return {
            "window": vars(self.window),
            "mlp": {"hidden": list(self.cfg.hidden)},
            "train": vars(self.train_cfg),
            "image_hw": list(self.image_hw),
        }

    @classmethod
    def from_config(cls, d: dict, stats: NormStats, dtype=np.float32) -> "BcPolicy":
        return cls(
            WindowConfig(**d["window"]),
            stats,
            MlpConfig(hidden=tuple(d["mlp"]["hidden"])),
            TrainConfig(**d["train"]),
            tuple(d["image_hw"]),
            dtype,
        )

    def loss_and_grads(self, images, joints, actions) -> float:
        B = actions.shape[0]
        target = actions[:, : self.window.exec_horizon].reshape(B, self.out_dim)
        emb = self.encoder.forward(images, joints)
        pred = self.net.forward(emb)
        diff = pred - target
        loss = float(np.mean(diff**2))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"bc loss became {loss}")
        demb = self.net.backward(((2.0 / diff.size) * diff).astype(self.dtype, copy=False))
        self.encoder.backward(demb)
        return loss

    def train_step(self, optimizer: AdamW, images, joints, actions, rng=None) -> float:
        optimizer.zero_grad()
        loss = self.loss_and_grads(images, joints, actions)
        optimizer.step()
        return loss

    def sample(self, images: np.ndarray, joints: np.ndarray, rng=None) -> np.ndarray:
        """(B, Ta, 12) deterministic prediction, clipped like the sampler."""
        pred = self.net.forward(self.encoder.forward(images, joints))
        B = images.shape[0]
        return np.clip(pred, -1.0, 1.0).reshape(B, self.window.exec_horizon, ACTION_DIM)

    def predict_chunk(self, obs_images: np.ndarray, obs_joints: np.ndarray, rng=None) -> np.ndarray:
        return self.sample(obs_images[None], obs_joints[None])[0]
