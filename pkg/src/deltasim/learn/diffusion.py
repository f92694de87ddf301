"""Diffusion policy: cosine noise schedule, epsilon-prediction training,
and the full ancestral reverse chain for sampling action chunks.

The denoiser is an MLP over [flattened noisy chunk, observation embedding,
sinusoidal step embedding] with additive-free plain concatenation. Chunks
are Tp x 12 normalized action sequences; samples are clipped to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import NormStats, WindowConfig
from ..errors import NonFiniteLoss
from .encoder import ObsEncoder
from .nn import AdamW, Mlp, Param

__all__ = [
    "DiffusionConfig",
    "TrainConfig",
    "cosine_alpha_bar",
    "step_embedding",
    "ddpm_add_noise",
    "DiffusionPolicy",
]

ACTION_DIM = 12


@dataclass(frozen=True)
class DiffusionConfig:
    steps: int = 100  # K
    cosine_offset: float = 0.008
    hidden: tuple[int, ...] = (512, 512)
    step_embed_dim: int = 32
    inference_steps: int | None = None  # None = full reverse chain

    def __post_init__(self):
        if self.steps < 1 or self.step_embed_dim % 2:
            raise ValueError("bad diffusion config")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-4
    weight_decay: float = 1e-6
    batch: int = 64
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch) < 1 or min(self.lr, self.weight_decay) < 0:
            raise ValueError("bad training config")


def cosine_alpha_bar(steps: int, offset: float = 0.008) -> tuple[np.ndarray, np.ndarray]:
    """Squared-cosine cumulative schedule.

    Returns (alpha_bar[0..K], beta[1..K]); alpha_bar[0] == 1 exactly and
    alpha_bar is strictly decreasing (betas clipped into [1e-8, 0.999]).
    """
    k = np.arange(steps + 1, dtype=float)
    f = np.cos(((k / steps) + offset) / (1.0 + offset) * np.pi / 2.0) ** 2
    raw = f / f[0]
    betas = np.clip(1.0 - raw[1:] / raw[:-1], 1e-8, 0.999)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return alpha_bar, betas


def step_embedding(k: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer diffusion steps, shape (B, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10_000.0) * np.arange(half) / half)
    ang = np.asarray(k, dtype=float)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def ddpm_add_noise(x0: np.ndarray, k, eps: np.ndarray, alpha_bar: np.ndarray) -> np.ndarray:
    """Forward process: x_k = sqrt(abar_k) x0 + sqrt(1 - abar_k) eps."""
    ab = alpha_bar[np.asarray(k)]
    while ab.ndim < x0.ndim:
        ab = ab[..., None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


class DiffusionPolicy:
    """Encoder + denoiser MLP trained with epsilon-prediction."""

    algo = "diffusion"

    def __init__(
        self,
        window: WindowConfig,
        stats: NormStats,
        cfg: DiffusionConfig = DiffusionConfig(),
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
        self.alpha_bar, self.betas = cosine_alpha_bar(cfg.steps, cfg.cosine_offset)

        rng = np.random.default_rng(np.random.SeedSequence(train_cfg.seed))
        self.encoder = ObsEncoder(image_hw, window.obs_horizon, rng, dtype)
        self.chunk_dim = window.pred_horizon * ACTION_DIM
        in_dim = self.chunk_dim + self.encoder.out_dim + cfg.step_embed_dim
        self.denoiser = Mlp((in_dim, *cfg.hidden, self.chunk_dim), rng, "denoiser", dtype)

    # -- plumbing ------------------------------------------------------------

    def params(self) -> list[Param]:
        return self.encoder.params() + self.denoiser.params()

    def config_dict(self) -> dict:
        return {
            "window": vars(self.window),
            "diffusion": {
                "steps": self.cfg.steps,
                "cosine_offset": self.cfg.cosine_offset,
                "hidden": list(self.cfg.hidden),
                "step_embed_dim": self.cfg.step_embed_dim,
                "inference_steps": self.cfg.inference_steps,
            },
            "train": vars(self.train_cfg),
            "image_hw": list(self.image_hw),
        }

    @classmethod
    def from_config(cls, d: dict, stats: NormStats, dtype=np.float32) -> "DiffusionPolicy":
        dc = d["diffusion"]
        return cls(
            WindowConfig(**d["window"]),
            stats,
            DiffusionConfig(
                steps=dc["steps"],
                cosine_offset=dc["cosine_offset"],
                hidden=tuple(dc["hidden"]),
                step_embed_dim=dc["step_embed_dim"],
                inference_steps=dc["inference_steps"],
            ),
            TrainConfig(**d["train"]),
            tuple(d["image_hw"]),
            dtype,
        )

    # -- training ------------------------------------------------------------

    def denoise(self, x_k: np.ndarray, obs_emb: np.ndarray, k: np.ndarray) -> np.ndarray:
        kemb = step_embedding(k, self.cfg.step_embed_dim).astype(self.dtype)
        inp = np.concatenate([x_k.astype(self.dtype, copy=False), obs_emb, kemb], axis=1)
        return self.denoiser.forward(inp)

    def loss_only(self, images, joints, actions, k, eps, denoise_fn=None) -> float:
        """Forward-only epsilon-prediction MSE; ``denoise_fn`` may stand in
        for the network (oracle predictors in tests)."""
        B = actions.shape[0]
        x0 = actions.reshape(B, self.chunk_dim)
        x_k = ddpm_add_noise(x0, k, eps, self.alpha_bar)
        obs_emb = self.encoder.forward(images, joints)
        pred = denoise_fn(x_k, obs_emb, k) if denoise_fn is not None else self.denoise(x_k, obs_emb, k)
        return float(np.mean((pred - eps) ** 2))

    def loss_and_grads(self, images, joints, actions, k, eps) -> float:
        """MSE between predicted and injected noise; populates grads."""
        B = actions.shape[0]
        x0 = actions.reshape(B, self.chunk_dim)
        x_k = ddpm_add_noise(x0, k, eps, self.alpha_bar)
        obs_emb = self.encoder.forward(images, joints)
        pred = self.denoise(x_k, obs_emb, k)
        diff = pred - eps
        loss = float(np.mean(diff**2))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"diffusion loss became {loss}")
        dpred = (2.0 / diff.size) * diff
        dinp = self.denoiser.backward(dpred.astype(self.dtype, copy=False))
        demb = dinp[:, self.chunk_dim : self.chunk_dim + self.encoder.out_dim]
        self.encoder.backward(demb)
        return loss

    def train_step(self, optimizer: AdamW, images, joints, actions, rng: np.random.Generator) -> float:
        B = actions.shape[0]
        k = rng.integers(1, self.cfg.steps + 1, size=B)
        eps = rng.standard_normal((B, self.chunk_dim)).astype(self.dtype)
        optimizer.zero_grad()
        loss = self.loss_and_grads(images, joints, actions, k, eps)
        optimizer.step()
        return loss

    # -- sampling ------------------------------------------------------------

    def sample(self, images: np.ndarray, joints: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Full reverse chain from Gaussian noise; (B, Tp, 12) in [-1, 1].

        Accepts a single rng (shared across the batch) or one rng per row,
        which keeps per-episode noise streams independent of batching.
        """
        rngs = rng if isinstance(rng, (list, tuple)) else None
        B = images.shape[0]

        def draw(shape):
            if rngs is None:
                return rng.standard_normal(shape)
            return np.stack([r.standard_normal(shape[1:]) for r in rngs])

        obs_emb = self.encoder.forward(images, joints)
        x = draw((B, self.chunk_dim)).astype(self.dtype)
        ab, betas = self.alpha_bar, self.betas
        for k in range(self.cfg.steps, 0, -1):
            eps_hat = self.denoise(x, obs_emb, np.full(B, k))
            alpha_k = 1.0 - betas[k - 1]
            x = (x - betas[k - 1] / np.sqrt(1.0 - ab[k]) * eps_hat) / np.sqrt(alpha_k)
            if k > 1:
                sigma = np.sqrt((1.0 - ab[k - 1]) / (1.0 - ab[k]) * betas[k - 1])
                x = x + sigma * draw((B, self.chunk_dim)).astype(self.dtype)
        return np.clip(x, -1.0, 1.0).reshape(B, self.window.pred_horizon, ACTION_DIM)

    def predict_chunk(self, obs_images: np.ndarray, obs_joints: np.ndarray, rng) -> np.ndarray:
        """Single-observation convenience wrapper: (Tp, 12) normalized."""
        return self.sample(obs_images[None], obs_joints[None], rng)[0]
