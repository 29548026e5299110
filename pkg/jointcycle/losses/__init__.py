from .objectives import (
    adversarial_loss,
    cycle_loss,
    dcl_loss,
    diffusion_loss,
    identity_loss,
    patch_vectors,
    total_loss,
    unit_patch_vectors,
)
from .perceptual import FeatureExtractor, perceptual_loss

__all__ = [
    "FeatureExtractor",
    "adversarial_loss",
    "cycle_loss",
    "dcl_loss",
    "diffusion_loss",
    "identity_loss",
    "patch_vectors",
    "perceptual_loss",
    "total_loss",
    "unit_patch_vectors",
]
