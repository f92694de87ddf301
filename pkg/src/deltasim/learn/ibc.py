"""Implicit behavior cloning: an energy model over observation-action pairs.

Training minimizes InfoNCE with uniform negatives: the demonstrated action
chunk must get lower energy than random chunks under the same observation.
Inference runs a derivative-free sample / rank / perturb loop and returns
the lowest-energy candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import NormStats, WindowConfig
from ..errors import NonFiniteLoss
from .bc import MlpConfig
from .diffusion import ACTION_DIM, TrainConfig
from .encoder import ObsEncoder
from .nn import AdamW, Mlp, Param

__all__ = ["IbcConfig", "IbcPolicy", "derivative_free_minimize"]


@dataclass(frozen=True)
class IbcConfig:
    train_negatives: int = 256
    infer_samples: int = 1024
    infer_iterations: int = 3
    noise_scale: float = 0.33
    noise_decay: float = 0.5

    def __post_init__(self):
        if min(self.train_negatives, self.infer_samples, self.infer_iterations) < 1:
            raise ValueError("ibc counts must be positive")

    @property
    def noise_schedule(self) -> tuple[float, ...]:
        return tuple(self.noise_scale * self.noise_decay**i for i in range(self.infer_iterations))


def derivative_free_minimize(
    energy_fn,
    dim: int,
    cfg: IbcConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample / rank / perturb minimization of an energy over [-1, 1]^dim.

    ``energy_fn`` maps (N, dim) candidates to (N,) energies. Candidates are
    resampled in proportion to softmax(-E), perturbed with the decaying
    noise schedule (0.33, 0.165, 0.0825 by default), and the argmin of the
    final population is returned.
    """
    cands = rng.uniform(-1.0, 1.0, (cfg.infer_samples, dim))
    for scale in cfg.noise_schedule:
        e = np.asarray(energy_fn(cands), dtype=float)
        logits = -e - np.max(-e)
        probs = np.exp(logits)
        probs /= probs.sum()
        idx = rng.choice(cfg.infer_samples, size=cfg.infer_samples, p=probs)
        cands = np.clip(cands[idx] + rng.normal(0.0, scale, cands.shape), -1.0, 1.0)
    e = np.asarray(energy_fn(cands), dtype=float)
    return cands[int(np.argmin(e))]


class IbcPolicy:
    algo = "ibc"

    def __init__(
        self,
        window: WindowConfig,
        stats: NormStats,
        cfg: IbcConfig = IbcConfig(),
        mlp_cfg: MlpConfig = MlpConfig(),
        train_cfg: TrainConfig = TrainConfig(),
        image_hw: tuple[int, int] = (32, 32),
        dtype=np.float32,
    ):
        self.window = window
        self.stats = stats
        self.cfg = cfg
        self.mlp_cfg = mlp_cfg
        self.train_cfg = train_cfg
        self.image_hw = tuple(image_hw)
        self.dtype = dtype
        self.action_dim = window.exec_horizon * ACTION_DIM
        rng = np.random.default_rng(np.random.SeedSequence(train_cfg.seed))
        self.encoder = ObsEncoder(image_hw, window.obs_horizon, rng, dtype)
        self.net = Mlp((self.encoder.out_dim + self.action_dim, *mlp_cfg.hidden, 1), rng, "ibc", dtype)

    def params(self) -> list[Param]:
        return self.encoder.params() + self.net.params()

    def config_dict(self) -> dict:
        return {
            "window": vars(self.window),
            "mlp": {"hidden": list(self.mlp_cfg.hidden)},
            "ibc": {
                "train_negatives": self.cfg.train_negatives,
                "infer_samples": self.cfg.infer_samples,
                "infer_iterations": self.cfg.infer_iterations,
                "noise_scale": self.cfg.noise_scale,
                "noise_decay": self.cfg.noise_decay,
            },
            "train": vars(self.train_cfg),
            "image_hw": list(self.image_hw),
        }

    @classmethod
    def from_config(cls, d: dict, stats: NormStats, dtype=np.float32) -> "IbcPolicy":
        return cls(
            WindowConfig(**d["window"]),
            stats,
            IbcConfig(**d["ibc"]),
            MlpConfig(hidden=tuple(d["mlp"]["hidden"])),
            TrainConfig(**d["train"]),
            tuple(d["image_hw"]),
            dtype,
        )

    def energies(self, emb: np.ndarray, actions_flat: np.ndarray) -> np.ndarray:
        """(N,) energies for N (embedding, action) pairs."""
        inp = np.concatenate([emb, actions_flat.astype(self.dtype, copy=False)], axis=1)
        return self.net.forward(inp)[:, 0]

    def loss_and_grads(self, images, joints, actions, negatives) -> float:
        """InfoNCE over the positive chunk vs uniform negatives."""
        B = actions.shape[0]
        N = negatives.shape[1]
        pos = actions[:, : self.window.exec_horizon].reshape(B, 1, self.action_dim)
        cands = np.concatenate([pos, negatives], axis=1)  # (B, 1+N, D)
        emb = self.encoder.forward(images, joints)
        emb_rep = np.repeat(emb, 1 + N, axis=0)
        flat = cands.reshape(B * (1 + N), self.action_dim)
        e = self.energies(emb_rep, flat).reshape(B, 1 + N)

        logits = -e
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        softmax = expl / expl.sum(axis=1, keepdims=True)
        loss = float(np.mean(-np.log(softmax[:, 0] + 1e-30)))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"ibc loss became {loss}")

        # dL/dE = (softmax - onehot_positive) * (-1) / B, through logits = -E.
        dlogits = softmax.copy()
        dlogits[:, 0] -= 1.0
        de = (-dlogits / B).reshape(B * (1 + N), 1)
        dinp = self.net.backward(de.astype(self.dtype, copy=False))
        demb = dinp[:, : self.encoder.out_dim].reshape(B, 1 + N, -1).sum(axis=1)
        self.encoder.backward(demb)
        return loss

    def train_step(self, optimizer: AdamW, images, joints, actions, rng: np.random.Generator) -> float:
        B = actions.shape[0]
        negatives = rng.uniform(-1.0, 1.0, (B, self.cfg.train_negatives, self.action_dim))
        optimizer.zero_grad()
        loss = self.loss_and_grads(images, joints, actions, negatives.astype(self.dtype))
        optimizer.step()
        return loss

    def sample(self, images: np.ndarray, joints: np.ndarray, rng) -> np.ndarray:
        """Derivative-free energy minimization per row; (B, Ta, 12)."""
        rngs = rng if isinstance(rng, (list, tuple)) else [rng] * images.shape[0]
        emb = self.encoder.forward(images, joints)
        out = np.empty((images.shape[0], self.window.exec_horizon, ACTION_DIM), dtype=self.dtype)
        for b in range(images.shape[0]):
            emb_b = np.repeat(emb[b : b + 1], self.cfg.infer_samples, axis=0)

            def energy(cands, _emb=emb_b):
                return self.energies(_emb, cands)

            best = derivative_free_minimize(energy, self.action_dim, self.cfg, rngs[b])
            out[b] = best.reshape(self.window.exec_horizon, ACTION_DIM)
        return out

    def predict_chunk(self, obs_images: np.ndarray, obs_joints: np.ndarray, rng) -> np.ndarray:
        return self.sample(obs_images[None], obs_joints[None], rng)[0]
