from __future__ import annotations

import numpy as np

from .. import config
from ..autodiff import Tensor
from ..autodiff import ops
from ..errors import ShapeError
from ..nn import Conv2d, Module

TAP_WIDTHS = (8, 16, 32, 32, 32)


class FeatureExtractor(Module):
    """Fixed random conv stack with one tap per block, shallow to deep.

    Blocks are conv3x3 + ReLU with a 2x2 average pool between consecutive blocks.
    Parameters are frozen at construction.
    """

    def __init__(self, channels: int = config.IMAGE_CHANNELS, seed: int = 1234, widths: tuple[int, ...] = TAP_WIDTHS):
        rng = np.random.default_rng(seed)
        c_prev = channels
        self.convs = []
        for w in widths:
            self.convs.append(Conv2d(c_prev, w, 3, rng))
            c_prev = w
        self.seed = seed
        self.min_size = 2 ** (len(widths) - 1)
        self.freeze()

    def taps(self, x: Tensor) -> list[Tensor]:
        if x.ndim == 3:
            x = ops.reshape(x, (1,) + x.shape)
        if min(x.shape[2:]) < self.min_size:
            raise ShapeError(f"input {x.shape[2]}x{x.shape[3]} is below the deepest tap's minimum {self.min_size}")
        out = []
        h = x
        for i, conv in enumerate(self.convs):
            if i:
                h = ops.avg_pool2d(h, 2)
            h = ops.relu(conv(h))
            out.append(h)
        return out

    def forward(self, x: Tensor) -> list[Tensor]:
        return self.taps(x)


def perceptual_loss(ext: FeatureExtractor, C_src: Tensor, C_cyc: Tensor) -> Tensor:
    """Mean over taps of the per-element squared feature distance."""
    if C_src.shape != C_cyc.shape:
        raise ShapeError(f"perceptual_loss: shapes {C_src.shape} and {C_cyc.shape} differ")
    per_tap = [ops.mse(a, b) for a, b in zip(ext.taps(C_src), ext.taps(C_cyc))]
    total = per_tap[0]
    for p in per_tap[1:]:
        total = ops.add(total, p)
    return ops.scale(total, 1.0 / len(per_tap))
