"""Demonstration post-processing: normalization, downsampling, windowing,
and augmentation.

Joint states and actions are mapped to [-1, 1] with per-dimension min/max
statistics; images to [0, 1]. Episodes are temporally downsampled to thin
out idle actions, then cut into one training window per frame index with
clamp padding (repeat the first observation at the start, the last action
at the end).

Augmentation perturbs observations only: the image gets a random rotation
plus random crop-and-resize collapsed into a single bilinear warp, and the
joint observation gets Gaussian noise whose magnitude is the configured
millimeter sigma carried through each dimension's normalization slope.
Target actions pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bus import EpisodeMeta, SyncFrame
from .errors import EmptyDataset

__all__ = [
    "Episode",
    "NormStats",
    "WindowConfig",
    "AugmentConfig",
    "TrainSample",
    "compute_norm_stats",
    "normalize",
    "denormalize",
    "downsample",
    "make_windows",
    "augment",
    "augment_batch",
    "WindowedDataset",
]


@dataclass
class Episode:
    """Array-of-frames view of one demonstration."""

    t: np.ndarray  # (T,)
    joints: np.ndarray  # (T, 12) float32, mm
    actions: np.ndarray  # (T, 12) float32, mm
    images: np.ndarray  # (T, H, W) uint8
    meta: EpisodeMeta

    @classmethod
    def from_frames(cls, frames: Sequence[SyncFrame], meta: EpisodeMeta) -> "Episode":
        return cls(
            t=np.array([f.t for f in frames]),
            joints=np.stack([f.joints for f in frames]).astype(np.float32),
            actions=np.stack([f.action for f in frames]).astype(np.float32),
            images=np.stack([f.image for f in frames]).astype(np.uint8),
            meta=meta,
        )

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class NormStats:
    """Per-dimension extrema over joints and actions (mm)."""

    joints_min: np.ndarray
    joints_max: np.ndarray
    actions_min: np.ndarray
    actions_max: np.ndarray

    def degenerate_joint_dims(self) -> np.ndarray:
        return self.joints_max <= self.joints_min

    def degenerate_action_dims(self) -> np.ndarray:
        return self.actions_max <= self.actions_min

    def to_dict(self) -> dict:
        return {
            "joints_min": self.joints_min.tolist(),
            "joints_max": self.joints_max.tolist(),
            "actions_min": self.actions_min.tolist(),
            "actions_max": self.actions_max.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            np.asarray(d["joints_min"], dtype=float),
            np.asarray(d["joints_max"], dtype=float),
            np.asarray(d["actions_min"], dtype=float),
            np.asarray(d["actions_max"], dtype=float),
        )


@dataclass(frozen=True)
class WindowConfig:
    obs_horizon: int = 2  # To
    pred_horizon: int = 16  # Tp
    exec_horizon: int = 8  # Ta
    downsample_factor: int = 3

    def __post_init__(self):
        if not (1 <= self.exec_horizon <= self.pred_horizon):
            raise ValueError("require 1 <= Ta <= Tp")
        if self.obs_horizon < 1 or self.downsample_factor < 1:
            raise ValueError("obs horizon and downsample factor must be >= 1")


@dataclass(frozen=True)
class AugmentConfig:
    crop_ratio: float = 0.9  # 32 -> 28 px, mirroring the full-scale 240 -> 216
    max_rotation_deg: float = 30.0
    joint_noise_std_mm: float = 3.16
    enabled: bool = True

    def __post_init__(self):
        if not (0.0 < self.crop_ratio <= 1.0):
            raise ValueError("crop ratio must be in (0, 1]")
        if self.joint_noise_std_mm < 0:
            raise ValueError("noise std must be non-negative")


@dataclass
class TrainSample:
    """Normalized observation window plus its action-chunk target."""

    obs_images: np.ndarray  # (To, H, W) float32 in [0, 1]
    obs_joints: np.ndarray  # (To, 12) float32 in [-1, 1]
    actions: np.ndarray  # (Tp, 12) float32 in [-1, 1]


def compute_norm_stats(episodes: Sequence[Episode]) -> NormStats:
    """Exact per-dimension min/max over every frame of every episode."""
    if not episodes:
        raise EmptyDataset("no episodes to compute statistics from")
    joints = np.concatenate([ep.joints for ep in episodes], axis=0).astype(float)
    actions = np.concatenate([ep.actions for ep in episodes], axis=0).astype(float)
    return NormStats(
        joints.min(axis=0), joints.max(axis=0), actions.min(axis=0), actions.max(axis=0)
    )


def _scale(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    return np.where(span > 0, 2.0 / np.where(span > 0, span, 1.0), 0.0)


def normalize(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Map [lo, hi] to [-1, 1] per dimension; degenerate dims map to 0."""
    scale = _scale(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    return (np.asarray(x, dtype=float) - lo) * scale - np.where(scale > 0, 1.0, 0.0)


def denormalize(xn: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Inverse of normalize; degenerate dims return lo."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    span = hi - lo
    return np.where(span > 0, (np.asarray(xn, dtype=float) + 1.0) * span / 2.0 + lo, lo)


def downsample(episode: Episode, factor: int = 3) -> Episode:
    """Keep frames with index = 0 (mod factor); order and stamps preserved."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return episode
    return Episode(
        t=episode.t[::factor].copy(),
        joints=episode.joints[::factor].copy(),
        actions=episode.actions[::factor].copy(),
        images=episode.images[::factor].copy(),
        meta=episode.meta,
    )


def _window_indices(T: int, cfg: WindowConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-window frame indices: obs (T, To) clamp at start, actions (T, Tp) at end."""
    i = np.arange(T)[:, None]
    obs = np.clip(i + np.arange(-cfg.obs_horizon + 1, 1)[None, :], 0, T - 1)
    act = np.clip(i + np.arange(cfg.pred_horizon)[None, :], 0, T - 1)
    return obs, act


def make_windows(episode: Episode, cfg: WindowConfig, stats: NormStats) -> list[TrainSample]:
    """One normalized training window per frame index of a downsampled episode."""
    T = len(episode)
    if T < 1:
        raise EmptyDataset("episode has no frames")
    obs_idx, act_idx = _window_indices(T, cfg)
    joints_n = normalize(episode.joints, stats.joints_min, stats.joints_max).astype(np.float32)
    actions_n = normalize(episode.actions, stats.actions_min, stats.actions_max).astype(np.float32)
    images = episode.images.astype(np.float32) / 255.0
    return [
        TrainSample(
            obs_images=images[obs_idx[i]].copy(),
            obs_joints=joints_n[obs_idx[i]].copy(),
            actions=actions_n[act_idx[i]].copy(),
        )
        for i in range(T)
    ]


# --- augmentation ------------------------------------------------------------


def _warp_params(cfg: AugmentConfig, out_size: int, rng: np.random.Generator, n: int):
    """Draw (angles, row offsets, col offsets) for n samples, in this order."""
    crop = max(int(round(cfg.crop_ratio * out_size)), 1)
    max_off = out_size - crop
    angles = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg, n)
    offs = rng.integers(0, max_off + 1, size=(n, 2)) if max_off > 0 else np.zeros((n, 2), int)
    return crop, angles, offs


def _warp_coords(out_size: int, crop: int, angle_deg: float, oy: float, ox: float):
    """Output pixel grid -> input pixel coords for rotate+crop+resize."""
    idx = np.arange(out_size, dtype=float)
    alpha = (crop - 1) / (out_size - 1) if out_size > 1 else 1.0
    rr, cc = np.meshgrid(idx * alpha + oy, idx * alpha + ox, indexing="ij")
    m = (out_size - 1) / 2.0
    a = np.deg2rad(angle_deg)
    ca, sa = np.cos(a), np.sin(a)
    # Inverse rotation about the image center, in (row, col) coordinates.
    r_in = m + ca * (rr - m) - sa * (cc - m)
    c_in = m + sa * (rr - m) + ca * (cc - m)
    return r_in, c_in


def _bilinear(img: np.ndarray, r: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Zero-fill bilinear sampling of a (H, W) float image."""
    H, W = img.shape
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    fr = r - r0
    fc = c - c0

    def take(rr, cc):
        valid = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
        out = np.zeros(rr.shape, dtype=img.dtype)
        out[valid] = img[rr[valid], cc[valid]]
        return out

    top = take(r0, c0) * (1 - fc) + take(r0, c0 + 1) * fc
    bot = take(r0 + 1, c0) * (1 - fc) + take(r0 + 1, c0 + 1) * fc
    return top * (1 - fr) + bot * fr


def augment(sample: TrainSample, cfg: AugmentConfig, rng: np.random.Generator, stats: NormStats) -> TrainSample:
    """Augment one normalized sample. Deterministic per rng state.

    Draw order: rotation angle, crop offsets, joint noise.
    """
    if not cfg.enabled:
        return TrainSample(sample.obs_images.copy(), sample.obs_joints.copy(), sample.actions.copy())
    To, H, W = sample.obs_images.shape
    crop, angles, offs = _warp_params(cfg, H, rng, 1)
    r_in, c_in = _warp_coords(H, crop, angles[0], offs[0, 0], offs[0, 1])
    images = np.stack([_bilinear(sample.obs_images[k], r_in, c_in) for k in range(To)])

    sigma = cfg.joint_noise_std_mm * _scale(stats.joints_min, stats.joints_max)
    noise = rng.standard_normal(sample.obs_joints.shape) * sigma[None, :]
    joints = (sample.obs_joints + noise).astype(np.float32)
    return TrainSample(images.astype(np.float32), joints, sample.actions.copy())


def augment_batch(
    images: np.ndarray,  # (B, To, H, W) float32
    joints: np.ndarray,  # (B, To, 12) float32
    cfg: AugmentConfig,
    rng: np.random.Generator,
    stats: NormStats,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized augmentation used by the training loop (same transform
    family as augment(); each sample gets its own draw)."""
    if not cfg.enabled:
        return images, joints
    B, To, H, W = images.shape
    crop, angles, offs = _warp_params(cfg, H, rng, B)
    out_images = np.empty_like(images)
    for b in range(B):
        r_in, c_in = _warp_coords(H, crop, angles[b], offs[b, 0], offs[b, 1])
        for k in range(To):
            out_images[b, k] = _bilinear(images[b, k], r_in, c_in)
    sigma = cfg.joint_noise_std_mm * _scale(stats.joints_min, stats.joints_max)
    noise = rng.standard_normal(joints.shape) * sigma[None, None, :]
    return out_images, (joints + noise).astype(np.float32)


class WindowedDataset:
    """Index-based window store over many episodes, for batched training.

    Holds normalized per-episode arrays once and gathers windows on demand;
    semantics match make_windows() exactly (cross-checked in tests).
    """

    def __init__(self, episodes: Sequence[Episode], cfg: WindowConfig, stats: NormStats | None = None):
        if not episodes:
            raise EmptyDataset("no episodes")
        eps = [downsample(ep, cfg.downsample_factor) for ep in episodes]
        self.cfg = cfg
        self.stats = stats if stats is not None else compute_norm_stats(eps)
        self._images = [ep.images.astype(np.float32) / 255.0 for ep in eps]
        self._joints = [
            normalize(ep.joints, self.stats.joints_min, self.stats.joints_max).astype(np.float32)
            for ep in eps
        ]
        self._actions = [
            normalize(ep.actions, self.stats.actions_min, self.stats.actions_max).astype(np.float32)
            for ep in eps
        ]
        index = []
        for e, ep in enumerate(eps):
            index.extend((e, i) for i in range(len(ep)))
        self._index = np.array(index, dtype=int)

    def __len__(self) -> int:
        return len(self._index)

    def gather(self, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(images (B, To, H, W), joints (B, To, 12), actions (B, Tp, 12))."""
        cfg = self.cfg
        B = len(ids)
        To, Tp = cfg.obs_horizon, cfg.pred_horizon
        H, W = self._images[0].shape[1:]
        images = np.empty((B, To, H, W), dtype=np.float32)
        joints = np.empty((B, To, 12), dtype=np.float32)
        actions = np.empty((B, Tp, 12), dtype=np.float32)
        for n, idx in enumerate(ids):
            e, i = self._index[idx]
            T = len(self._joints[e])
            obs_idx = np.clip(np.arange(i - To + 1, i + 1), 0, T - 1)
            act_idx = np.clip(np.arange(i, i + Tp), 0, T - 1)
            images[n] = self._images[e][obs_idx]
            joints[n] = self._joints[e][obs_idx]
            actions[n] = self._actions[e][act_idx]
        return images, joints, actions
