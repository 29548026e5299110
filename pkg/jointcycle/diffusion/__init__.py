from .denoiser import DenoiserNet, denoise
from .process import (
    ComponentPair,
    DiffusionState,
    check_time,
    diffuse_with_components,
    forward_diffuse,
    true_component,
)

__all__ = [
    "ComponentPair",
    "DenoiserNet",
    "DiffusionState",
    "check_time",
    "denoise",
    "diffuse_with_components",
    "forward_diffuse",
    "true_component",
]
