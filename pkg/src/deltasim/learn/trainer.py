"""Shared training loop for all three policy families."""

from __future__ import annotations

import logging

import numpy as np

from ..dataset import AugmentConfig, WindowedDataset, augment_batch
from .nn import AdamW

log = logging.getLogger(__name__)

__all__ = ["fit"]


def fit(
    policy,
    dataset: WindowedDataset,
    augment_cfg: AugmentConfig = AugmentConfig(),
    epochs: int | None = None,
    optimizer: AdamW | None = None,
    log_every: int = 0,
) -> list[float]:
    """Train ``policy`` on the windowed dataset; returns per-step losses.

    Deterministic per policy.train_cfg.seed: shuffling, augmentation, and
    the policy's own draws run on independent child streams of that seed.
    Pass ``optimizer`` to continue training an existing model (fine-tuning).
    """
    tc = policy.train_cfg
    epochs = tc.epochs if epochs is None else epochs
    opt = optimizer or AdamW(policy.params(), lr=tc.lr, weight_decay=tc.weight_decay)
    shuffle_rng, augment_rng, step_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(tc.seed).spawn(3)
    )
    losses: list[float] = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(dataset))
        for start in range(0, len(order), tc.batch):
            ids = order[start : start + tc.batch]
            images, joints, actions = dataset.gather(ids)
            images, joints = augment_batch(images, joints, augment_cfg, augment_rng, dataset.stats)
            losses.append(policy.train_step(opt, images, joints, actions, step_rng))
        if log_every and (epoch + 1) % log_every == 0:
            recent = np.mean(losses[-max(len(order) // tc.batch, 1) :])
            log.info("epoch %d/%d loss %.5f", epoch + 1, epochs, recent)
    return losses
