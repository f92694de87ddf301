"""From-scratch policy learning: diffusion, BC, and IBC."""

from .bc import BcPolicy, MlpConfig
from .diffusion import (
    ACTION_DIM,
    DiffusionConfig,
    DiffusionPolicy,
    TrainConfig,
    cosine_alpha_bar,
    ddpm_add_noise,
    step_embedding,
)
from .encoder import ObsEncoder
from .ibc import IbcConfig, IbcPolicy, derivative_free_minimize
from .model_io import load_model, save_model
from .nn import AdamW, Linear, Mlp, Param, gradient_check
from .trainer import fit

__all__ = [
    "ACTION_DIM",
    "AdamW",
    "BcPolicy",
    "DiffusionConfig",
    "DiffusionPolicy",
    "IbcConfig",
    "IbcPolicy",
    "Linear",
    "Mlp",
    "MlpConfig",
    "ObsEncoder",
    "Param",
    "TrainConfig",
    "cosine_alpha_bar",
    "ddpm_add_noise",
    "derivative_free_minimize",
    "fit",
    "gradient_check",
    "load_model",
    "save_model",
    "step_embedding",
]
