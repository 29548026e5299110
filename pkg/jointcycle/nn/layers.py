from __future__ import annotations

import math

import numpy as np

from .. import config
from ..autodiff import Tensor
from ..autodiff import ops
from .module import Module, Parameter


def _normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float = 1.0) -> np.ndarray:
    return (rng.standard_normal(shape) * gain * math.sqrt(1.0 / fan_in)).astype(np.float32)


def groups_for(channels: int, preferred: int = config.GROUP_NORM_GROUPS) -> int:
    """Group count: `preferred` when it divides, one group per channel below `preferred` channels."""
    if channels < preferred:
        return channels
    return math.gcd(channels, preferred)


def time_features(t: float | np.ndarray, dim: int, batch: int | None = None) -> np.ndarray:
    """Sinusoidal features of continuous time in [0, 1]; returns (batch, dim) float32."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if batch is not None and t.size == 1:
        t = np.full(batch, float(t[0]))
    half = dim // 2
    freqs = np.exp(-math.log(10_000.0) * np.arange(half) / half)
    args = 1000.0 * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(np.float32)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 1.0):
        self.weight = Parameter(_normal(rng, (n_in, n_out), n_in, gain))
        self.bias = Parameter(np.zeros(n_out, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.weight), self.bias)


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        k: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int | None = None,
        gain: float = math.sqrt(2.0),
        bias: bool = True,
    ):
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.weight = Parameter(_normal(rng, (c_out, c_in, k, k), c_in * k * k, gain))
        self.bias = Parameter(np.zeros(c_out, dtype=np.float32)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class GroupNorm(Module):
    def __init__(self, channels: int):
        self.groups = groups_for(channels)
        self.weight = Parameter(np.ones(channels, dtype=np.float32))
        self.bias = Parameter(np.zeros(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return ops.group_norm(x, self.weight, self.bias, groups=self.groups)


class TimeMLP(Module):
    """Sinusoidal features -> Linear -> SiLU -> Linear."""

    def __init__(self, dim: int, out_dim: int, rng: np.random.Generator):
        self.dim = dim
        self.fc1 = Linear(dim, out_dim, rng)
        self.fc2 = Linear(out_dim, out_dim, rng)

    def forward(self, t: float | np.ndarray, batch: int) -> Tensor:
        feats = time_features(t, self.dim, batch)
        return self.fc2(ops.silu(self.fc1(Tensor(feats, dtype=self.fc1.weight.dtype))))


class ResBlock(Module):
    """GN-SiLU-conv, GN (+FiLM from the time embedding)-SiLU-conv, with a 1x1 skip on width change."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, time_dim: int | None = None):
        self.norm1 = GroupNorm(c_in)
        self.conv1 = Conv2d(c_in, c_out, 3, rng)
        self.norm2 = GroupNorm(c_out)
        self.film = Linear(time_dim, 2 * c_out, rng, gain=0.1) if time_dim else None
        self.conv2 = Conv2d(c_out, c_out, 3, rng, gain=0.5)
        self.skip = Conv2d(c_in, c_out, 1, rng, gain=1.0) if c_in != c_out else None
        self.c_out = c_out

    def forward(self, x: Tensor, temb: Tensor | None = None) -> Tensor:
        h = self.conv1(ops.silu(self.norm1(x)))
        h = self.norm2(h)
        if self.film is not None and temb is not None:
            ss = self.film(ops.silu(temb))
            h = ops.film(h, ss[:, : self.c_out], ss[:, self.c_out :])
        h = self.conv2(ops.silu(h))
        return ops.add(self.skip(x) if self.skip is not None else x, h)


class PlainResBlock(Module):
    """conv-GN-ReLU-conv-GN with identity skip (time-free trunk block)."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv1 = Conv2d(channels, channels, 3, rng)
        self.norm1 = GroupNorm(channels)
        self.conv2 = Conv2d(channels, channels, 3, rng, gain=0.5)
        self.norm2 = GroupNorm(channels)

    def forward(self, x: Tensor) -> Tensor:
        h = ops.relu(self.norm1(self.conv1(x)))
        return ops.add(x, self.norm2(self.conv2(h)))


class SelfAttention2d(Module):
    """Multi-head self-attention over flattened spatial positions, residual."""

    def __init__(self, channels: int, heads: int, rng: np.random.Generator):
        self.heads = heads
        self.norm = GroupNorm(channels)
        self.q = Linear(channels, channels, rng)
        self.k = Linear(channels, channels, rng)
        self.v = Linear(channels, channels, rng)
        self.proj = Linear(channels, channels, rng, gain=0.5)

    def forward(self, x: Tensor) -> Tensor:
        b, c, h, w = x.shape
        tokens = ops.transpose(ops.reshape(self.norm(x), (b, c, h * w)), (0, 2, 1))
        a = ops.attention(self.q(tokens), self.k(tokens), self.v(tokens), heads=self.heads)
        out = ops.reshape(ops.transpose(self.proj(a), (0, 2, 1)), (b, c, h, w))
        return ops.add(x, out)


class Downsample(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.conv = Conv2d(c_in, c_out, 3, rng, stride=2, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


class Upsample(Module):
    """Nearest x2 upsample followed by a 3x3 convolution."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.conv = Conv2d(c_in, c_out, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(ops.upsample_nearest(x, 2))
