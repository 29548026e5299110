"""Time-dependent component translators and patch discriminators.

A translator maps an image component of one domain to the other at a given diffusion time:
time embedding -> FiLM residual block -> multi-head self-attention -> strided-conv encoder ->
residual trunk -> upsampling decoder -> 7x7 output convolution (no activation).
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np

from .. import config
from ..autodiff import Tensor
from ..autodiff import ops
from ..diffusion.process import check_time
from ..errors import ShapeError
from ..models import TranslatorPreset
from ..nn import Conv2d, GroupNorm, Module, PlainResBlock, ResBlock, SelfAttention2d, TimeMLP, Upsample

logger = logging.getLogger(__name__)


class _ConvNormAct(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator, stride: int = 1, padding: int | None = None):
        self.conv = Conv2d(c_in, c_out, k, rng, stride=stride, padding=padding)
        self.norm = GroupNorm(c_out)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.conv(x)))


class _UpNormAct(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.up = Upsample(c_in, c_out, rng)
        self.norm = GroupNorm(c_out)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.up(x)))


class TranslatorNet(Module):
    def __init__(self, preset: TranslatorPreset | None = None, channels: int = config.IMAGE_CHANNELS, seed: int = 0):
        preset = preset or TranslatorPreset.named("desk")
        preset.validate()
        rng = np.random.default_rng(seed)
        base = preset.base_width
        widths = [base * 2**i for i in range(preset.n_down + 1)]

        if preset.time_conditioned:
            self.time_mlp = TimeMLP(preset.time_dim, preset.time_dim, rng)
            self.stem = ResBlock(channels, base, rng, time_dim=preset.time_dim)
        else:
            self.time_mlp = None
            self.stem = _ConvNormAct(channels, base, 3, rng)
        self.attn = SelfAttention2d(base, preset.heads, rng) if preset.attention else None
        self.down = [_ConvNormAct(widths[i], widths[i + 1], 3, rng, stride=2, padding=1) for i in range(preset.n_down)]
        self.trunk = [PlainResBlock(widths[-1], rng) for _ in range(preset.n_res)]
        self.up = [_UpNormAct(widths[i + 1], widths[i], rng) for i in reversed(range(preset.n_up))]
        self.head = Conv2d(base, channels, 7, rng, gain=1.0)
        self.preset = preset
        self.channels = channels

    @property
    def min_size(self) -> int:
        return 2**self.preset.n_down

    def embed(self, t: Any, batch: int) -> Tensor | None:
        if self.time_mlp is None:
            return None
        return self.time_mlp(t, batch)

    def forward(self, C: Tensor, t: Any) -> Tensor:
        temb = self.embed(t, C.shape[0])
        h = self.stem(C, temb) if temb is not None else self.stem(C)
        if self.attn is not None:
            h = self.attn(h)
        for block in self.down:
            h = block(h)
        for block in self.trunk:
            h = block(h)
        for block in self.up:
            h = block(h)
        return self.head(h)


class PatchDiscriminator(Module):
    """Three stride-2 conv blocks and a stride-1 output conv emitting `n_out` channels per patch."""

    def __init__(
        self,
        channels: int = config.IMAGE_CHANNELS,
        n_out: int = config.DCL_DIM,
        widths: tuple[int, ...] = (16, 32, 64),
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        c_prev = channels
        self.convs: list[Conv2d] = []
        self.norms: list[GroupNorm | None] = []
        for i, w in enumerate(widths):
            self.convs.append(Conv2d(c_prev, w, 4, rng, stride=2, padding=1, bias=(i == 0)))
            self.norms.append(GroupNorm(w) if i > 0 else None)
            c_prev = w
        self.out = Conv2d(c_prev, n_out, 3, rng, padding=1, gain=1.0)
        self.n_out = n_out
        self.min_size = 2 ** len(widths)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for conv, norm in zip(self.convs, self.norms):
            h = conv(h)
            if norm is not None:
                h = norm(h)
            h = ops.leaky_relu(h, 0.2)
        return self.out(h)


def _batched(x: Any) -> tuple[Tensor, bool]:
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x), dtype=np.float32)
    if x.ndim == 3:
        return ops.reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected (B, C, H, W) or (C, H, W) input, got shape {x.shape}")
    return x, False


def time_embed(net: TranslatorNet, t: Any, batch: int = 1) -> Tensor:
    """The translator's time embedding, shape (batch, time_dim)."""
    check_time(t)
    emb = net.embed(t, batch)
    if emb is None:
        raise ValueError("translator was built without time conditioning")
    return emb


def translate(net: Module, C: Any, t: Any) -> Tensor:
    """Map a component to the other domain at time `t`; output shape equals input shape."""
    check_time(t)
    x, single = _batched(C)
    if isinstance(net, TranslatorNet):
        if x.shape[1] != net.channels:
            raise ShapeError(f"translator expects {net.channels} channels, got {x.shape[1]}")
        h, w = x.shape[2:]
        if h % net.min_size or w % net.min_size:
            raise ShapeError(f"spatial size {h}x{w} must be divisible by {net.min_size}")
    out = net(x, t)
    if out.shape != x.shape:
        raise ShapeError(f"translator changed shape {x.shape} -> {out.shape}")
    return ops.reshape(out, out.shape[1:]) if single else out


def cycle(F: Module, G: Module, C: Any, t: Any) -> Tensor:
    """F(G(C, t), t): round trip of a source component through the target domain."""
    return translate(F, translate(G, C, t), t)


def discriminate(D: PatchDiscriminator, C: Any) -> Tensor:
    """N-channel patch map, (B, N, h, w)."""
    x, _ = _batched(C)
    if min(x.shape[2:]) < D.min_size:
        raise ShapeError(f"input {x.shape[2]}x{x.shape[3]} is smaller than the discriminator field {D.min_size}")
    return D(x)
