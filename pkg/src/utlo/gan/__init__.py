"""UTLO networks, objectives and the alternating training step."""

from .config import ConfigError, TrainConfig, UTLOConfig
from .losses import (
    combine,
    d_loss_from_logits,
    g_loss_from_logits,
    loss_conditional,
    loss_total,
    loss_unconditional,
)
from .model import UTLOModel
from .networks import ParamStore, SplitDiscriminator, SplitGenerator, StyleMapper, map_styles
from .train import (
    NumericalAbort,
    TrainState,
    checkpoint_load,
    checkpoint_save,
    train_step,
)

__all__ = [
    "ConfigError",
    "NumericalAbort",
    "ParamStore",
    "SplitDiscriminator",
    "SplitGenerator",
    "StyleMapper",
    "TrainConfig",
    "TrainState",
    "UTLOConfig",
    "UTLOModel",
    "checkpoint_load",
    "checkpoint_save",
    "combine",
    "d_loss_from_logits",
    "g_loss_from_logits",
    "loss_conditional",
    "loss_total",
    "loss_unconditional",
    "map_styles",
    "train_step",
]
