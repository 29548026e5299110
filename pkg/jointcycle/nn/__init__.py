from .layers import (
    Conv2d,
    Downsample,
    GroupNorm,
    Linear,
    PlainResBlock,
    ResBlock,
    SelfAttention2d,
    TimeMLP,
    Upsample,
    groups_for,
    time_features,
)
from .module import Module, Parameter

__all__ = [
    "Conv2d",
    "Downsample",
    "GroupNorm",
    "Linear",
    "Module",
    "Parameter",
    "PlainResBlock",
    "ResBlock",
    "SelfAttention2d",
    "TimeMLP",
    "Upsample",
    "groups_for",
    "time_features",
]
