from __future__ import annotations

import logging
from typing import Any

import numpy as np

from ..autodiff import Tensor
from ..autodiff import ops
from ..errors import ShapeError
from ..models import DenoiserConfig
from ..nn import Conv2d, Downsample, GroupNorm, Module, ResBlock, TimeMLP, Upsample
from .process import ComponentPair, check_time

logger = logging.getLogger(__name__)


class _Decoder(Module):
    """One output head: walks back up the encoder's levels, consuming its skips."""

    def __init__(self, widths: list[int], channels: int, temb_dim: int, rng: np.random.Generator):
        levels = len(widths)
        self.blocks = [ResBlock(2 * widths[i], widths[i], rng, time_dim=temb_dim) for i in range(levels)]
        self.ups = [Upsample(widths[i], widths[i - 1], rng) for i in range(1, levels)]
        self.norm = GroupNorm(widths[0])
        self.conv_out = Conv2d(widths[0], channels, 3, rng, gain=0.1)

    def forward(self, h: Tensor, skips: list[Tensor], temb: Tensor) -> Tensor:
        for i in reversed(range(len(self.blocks))):
            h = self.blocks[i](ops.concat([h, skips[i]], axis=1), temb)
            if i > 0:
                h = self.ups[i - 1](h)
        return self.conv_out(ops.silu(self.norm(h)))


class DenoiserNet(Module):
    """U-Net with a shared encoder and two decoders: one for the image component, one for noise."""

    def __init__(self, cfg: DenoiserConfig | None = None, seed: int = 0):
        cfg = cfg or DenoiserConfig()
        cfg.validate()
        rng = np.random.default_rng(seed)
        widths = [cfg.base_width * 2**i for i in range(cfg.levels)]
        temb_dim = 2 * cfg.time_dim

        self.time_mlp = TimeMLP(cfg.time_dim, temb_dim, rng)
        self.conv_in = Conv2d(cfg.channels, widths[0], 3, rng)
        self.enc = [ResBlock(w, w, rng, time_dim=temb_dim) for w in widths]
        self.downs = [Downsample(widths[i], widths[i + 1], rng) for i in range(cfg.levels - 1)]
        self.mid = ResBlock(widths[-1], widths[-1], rng, time_dim=temb_dim)
        self.dec_C = _Decoder(widths, cfg.channels, temb_dim, rng)
        self.dec_eps = _Decoder(widths, cfg.channels, temb_dim, rng)
        self.cfg = cfg
        logger.debug("denoiser widths=%s params=%d", widths, self.num_parameters())

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.cfg.image_shape

    def encode(self, x_t: Tensor, temb: Tensor) -> tuple[Tensor, list[Tensor]]:
        h = self.conv_in(x_t)
        skips: list[Tensor] = []
        for i, block in enumerate(self.enc):
            h = block(h, temb)
            skips.append(h)
            if i < len(self.downs):
                h = self.downs[i](h)
        return self.mid(h, temb), skips

    def forward(self, x_t: Tensor, t: Any) -> ComponentPair:
        temb = self.time_mlp(t, x_t.shape[0])
        h, skips = self.encode(x_t, temb)
        return ComponentPair(C=self.dec_C(h, skips, temb), eps=self.dec_eps(h, skips, temb))


def denoise(net: DenoiserNet, x_t: Any, t: Any) -> ComponentPair:
    """(C, eps) = net(x_t, t). `x_t` is (B, C, H, W) or a single (C, H, W) image."""
    check_time(t)
    x = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t), dtype=net.conv_in.weight.dtype)
    single = x.ndim == len(net.image_shape)
    if single:
        x = ops.reshape(x, (1,) + x.shape)
    if x.ndim != 4 or tuple(x.shape[1:]) != net.image_shape:
        raise ShapeError(f"denoiser expects images of shape {net.image_shape}, got {x_t.shape}")
    pair = net(x, t)
    if single:
        pair = ComponentPair(C=ops.reshape(pair.C, net.image_shape), eps=ops.reshape(pair.eps, net.image_shape))
    return pair
