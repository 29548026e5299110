"""Primitive catalog.

Every primitive is a `Function` with an analytic backward rule. The functional wrappers
below are what networks and losses call; `forward_eval` dispatches by primitive name.
Convolutions use zero padding; image tensors are laid out (batch, channels, height, width).
"""

from __future__ import annotations

import math
from typing import Any, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Function, Tensor, unbroadcast


def _check_broadcast(name: str, *shapes: tuple[int, ...]) -> None:
    try:
        np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeError(f"{name}: shapes {' and '.join(map(str, shapes))} do not broadcast") from None


# ---------- elementwise arithmetic ----------
class Add(Function):
    name = "add"

    def forward(self, a, b):
        _check_broadcast(self.name, a.shape, b.shape)
        return a + b

    def backward(self, g):
        a, b = self.inputs
        return (
            unbroadcast(g, a.shape) if self.needs(0) else None,
            unbroadcast(g, b.shape) if self.needs(1) else None,
        )


class Sub(Function):
    name = "sub"

    def forward(self, a, b):
        _check_broadcast(self.name, a.shape, b.shape)
        return a - b

    def backward(self, g):
        a, b = self.inputs
        return (
            unbroadcast(g, a.shape) if self.needs(0) else None,
            unbroadcast(-g, b.shape) if self.needs(1) else None,
        )


class Mul(Function):
    name = "mul"

    def forward(self, a, b):
        _check_broadcast(self.name, a.shape, b.shape)
        return a * b

    def backward(self, g):
        a, b = self.inputs
        return (
            unbroadcast(g * b.data, a.shape) if self.needs(0) else None,
            unbroadcast(g * a.data, b.shape) if self.needs(1) else None,
        )


class Div(Function):
    name = "div"

    def forward(self, a, b):
        _check_broadcast(self.name, a.shape, b.shape)
        return a / b

    def backward(self, g):
        a, b = self.inputs
        return (
            unbroadcast(g / b.data, a.shape) if self.needs(0) else None,
            unbroadcast(-g * a.data / (b.data * b.data), b.shape) if self.needs(1) else None,
        )


class Scale(Function):
    name = "scale"

    def forward(self, x, k: float = 1.0):
        return x * x.dtype.type(k)

    def backward(self, g):
        return (g * g.dtype.type(self.attrs["k"]),)


class MatMul(Function):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
        return np.matmul(a, b)

    def backward(self, g):
        a, b = self.inputs
        ga = gb = None
        if self.needs(0):
            ga = unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if self.needs(1):
            gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb


# ---------- convolution and resampling ----------
class Conv2d(Function):
    """Cross-correlation of (B, Cin, H, W) with (Cout, Cin, k, k) weights, optional (Cout,) bias."""

    name = "conv2d"

    def forward(self, x, w, b=None, stride: int = 1, padding: int = 0):
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1] or w.shape[2] != w.shape[3]:
            raise ShapeError(f"conv2d: input {x.shape} incompatible with weight {w.shape}")
        if b is not None and b.shape != (w.shape[0],):
            raise ShapeError(f"conv2d: bias {b.shape} does not match {w.shape[0]} output channels")
        k = w.shape[2]
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        if xp.shape[2] < k or xp.shape[3] < k:
            raise ShapeError(f"conv2d: padded input {xp.shape[2:]} smaller than kernel {k}")
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
        self.xp_shape = xp.shape
        self.win = win
        out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        if b is not None:
            out = out + b[None, :, None, None]
        return np.ascontiguousarray(out)

    def backward(self, g):
        x, w = self.inputs[0], self.inputs[1]
        stride, padding = self.attrs.get("stride", 1), self.attrs.get("padding", 0)
        k = w.shape[2]
        gx = gw = gb = None
        if self.needs(1):
            gw = np.tensordot(g, self.win, axes=([0, 2, 3], [0, 2, 3]))
        if len(self.inputs) > 2 and self.needs(2):
            gb = g.sum(axis=(0, 2, 3))
        if self.needs(0):
            ho, wo = g.shape[2], g.shape[3]
            cols = np.tensordot(g, w.data, axes=([1], [0]))  # (B, Ho, Wo, Cin, k, k)
            gxp = np.zeros(self.xp_shape, dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding : padding + x.shape[2], padding : padding + x.shape[3]] if padding else gxp
        return (gx, gw, gb) if len(self.inputs) > 2 else (gx, gw)


class UpsampleNearest(Function):
    name = "upsample_nearest"

    def forward(self, x, factor: int = 2):
        return x.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(self, g):
        f = self.attrs.get("factor", 2)
        b, c, h, w = g.shape
        return (g.reshape(b, c, h // f, f, w // f, f).sum(axis=(3, 5)),)


class AvgPool2d(Function):
    name = "avg_pool2d"

    def forward(self, x, k: int = 2):
        b, c, h, w = x.shape
        if h % k or w % k:
            raise ShapeError(f"avg_pool2d: spatial size {(h, w)} not divisible by {k}")
        return x.reshape(b, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def backward(self, g):
        k = self.attrs.get("k", 2)
        return (g.repeat(k, axis=2).repeat(k, axis=3) / (k * k),)


# ---------- normalization and modulation ----------
class GroupNorm(Function):
    name = "group_norm"

    def forward(self, x, gamma, beta, groups: int = 8, eps: float = 1e-5):
        b, c = x.shape[:2]
        if c % groups:
            raise ShapeError(f"group_norm: {c} channels not divisible into {groups} groups")
        if gamma.shape != (c,) or beta.shape != (c,):
            raise ShapeError(f"group_norm: affine params must have shape ({c},)")
        xg = x.reshape(b, groups, -1)
        mu = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = ((xg - mu) * inv).reshape(x.shape)
        self.xhat, self.inv = xhat, inv
        bshape = (1, c) + (1,) * (x.ndim - 2)
        return xhat * gamma.reshape(bshape) + beta.reshape(bshape)

    def backward(self, g):
        x, gamma, _ = self.inputs
        groups = self.attrs.get("groups", 8)
        b, c = x.shape[:2]
        axes = (0,) + tuple(range(2, x.ndim))
        bshape = (1, c) + (1,) * (x.ndim - 2)
        ggamma = (g * self.xhat).sum(axis=axes) if self.needs(1) else None
        gbeta = g.sum(axis=axes) if self.needs(2) else None
        gx = None
        if self.needs(0):
            dxhat = (g * gamma.data.reshape(bshape)).reshape(b, groups, -1)
            xh = self.xhat.reshape(b, groups, -1)
            gx = self.inv * (
                dxhat - dxhat.mean(axis=2, keepdims=True) - xh * (dxhat * xh).mean(axis=2, keepdims=True)
            )
            gx = gx.reshape(x.shape)
        return gx, ggamma, gbeta


class Film(Function):
    """Feature-wise affine modulation: x * (1 + scale) + shift with per-(batch, channel) scale/shift."""

    name = "film"

    def forward(self, x, scale, shift):
        if scale.shape != x.shape[:2] or shift.shape != x.shape[:2]:
            raise ShapeError(f"film: scale/shift {scale.shape}/{shift.shape} must match {x.shape[:2]}")
        ext = (slice(None), slice(None)) + (None,) * (x.ndim - 2)
        return x * (1.0 + scale[ext]) + shift[ext]

    def backward(self, g):
        x, scale, _ = self.inputs
        ext = (slice(None), slice(None)) + (None,) * (x.ndim - 2)
        axes = tuple(range(2, x.ndim))
        return (
            g * (1.0 + scale.data[ext]) if self.needs(0) else None,
            (g * x.data).sum(axis=axes) if self.needs(1) else None,
            g.sum(axis=axes) if self.needs(2) else None,
        )


# ---------- activations ----------
class ReLU(Function):
    name = "relu"

    def forward(self, x):
        return np.maximum(x, 0)

    def backward(self, g):
        return (g * (self.inputs[0].data > 0),)


class LeakyReLU(Function):
    name = "leaky_relu"

    def forward(self, x, slope: float = 0.2):
        return np.where(x > 0, x, x * x.dtype.type(slope))

    def backward(self, g):
        slope = g.dtype.type(self.attrs.get("slope", 0.2))
        return (np.where(self.inputs[0].data > 0, g, g * slope),)


class SiLU(Function):
    name = "silu"

    def forward(self, x):
        self.sig = 1.0 / (1.0 + np.exp(-x))
        return x * self.sig

    def backward(self, g):
        x, s = self.inputs[0].data, self.sig
        return (g * (s * (1.0 + x * (1.0 - s))),)


class Tanh(Function):
    name = "tanh"

    def forward(self, x):
        self.y = np.tanh(x)
        return self.y

    def backward(self, g):
        return (g * (1.0 - self.y * self.y),)


class Softmax(Function):
    name = "softmax"

    def forward(self, x, axis: int = -1):
        z = np.exp(x - x.max(axis=axis, keepdims=True))
        self.y = z / z.sum(axis=axis, keepdims=True)
        return self.y

    def backward(self, g):
        axis = self.attrs.get("axis", -1)
        y = self.y
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)


class LogSumExp(Function):
    name = "logsumexp"

    def forward(self, x, axis: int = -1):
        m = x.max(axis=axis, keepdims=True)
        z = np.exp(x - m)
        s = z.sum(axis=axis, keepdims=True)
        self.p = z / s
        return np.squeeze(m + np.log(s), axis=axis)

    def backward(self, g):
        axis = self.attrs.get("axis", -1)
        return (self.p * np.expand_dims(g, axis),)


# ---------- attention ----------
class Attention(Function):
    """Scaled dot-product attention over tokens: q, k, v are (B, T, D), split into `heads` heads."""

    name = "attention"

    def forward(self, q, k, v, heads: int = 1):
        if q.ndim != 3 or q.shape != k.shape or q.shape != v.shape:
            raise ShapeError(f"attention: q/k/v shapes {q.shape}, {k.shape}, {v.shape} must match (B, T, D)")
        b, t, d = q.shape
        if d % heads:
            raise ShapeError(f"attention: dim {d} not divisible by {heads} heads")
        dh = d // heads

        def split(a):
            return a.reshape(b, t, heads, dh).transpose(0, 2, 1, 3)

        qh, kh, vh = split(q), split(k), split(v)
        s = np.matmul(qh, kh.transpose(0, 1, 3, 2)) / math.sqrt(dh)
        s = s - s.max(axis=-1, keepdims=True)
        p = np.exp(s)
        p = p / p.sum(axis=-1, keepdims=True)
        self.qh, self.kh, self.vh, self.p, self.dh = qh, kh, vh, p, dh
        return np.matmul(p, vh).transpose(0, 2, 1, 3).reshape(b, t, d)

    def backward(self, g):
        b, t, d = g.shape
        heads = self.attrs.get("heads", 1)
        dh = self.dh
        go = g.reshape(b, t, heads, dh).transpose(0, 2, 1, 3)
        p = self.p
        gv = np.matmul(p.transpose(0, 1, 3, 2), go)
        gp = np.matmul(go, self.vh.transpose(0, 1, 3, 2))
        gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True)) / math.sqrt(dh)
        gq = np.matmul(gs, self.kh)
        gk = np.matmul(gs.transpose(0, 1, 3, 2), self.qh)

        def merge(a):
            return a.transpose(0, 2, 1, 3).reshape(b, t, d)

        return (
            merge(gq) if self.needs(0) else None,
            merge(gk) if self.needs(1) else None,
            merge(gv) if self.needs(2) else None,
        )


# ---------- shape ----------
class Reshape(Function):
    name = "reshape"

    def forward(self, x, shape: tuple[int, ...] = ()):
        try:
            return x.reshape(shape)
        except ValueError:
            raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None

    def backward(self, g):
        return (g.reshape(self.inputs[0].shape),)


class Transpose(Function):
    name = "transpose"

    def forward(self, x, axes: tuple[int, ...] = ()):
        return np.transpose(x, axes or None)

    def backward(self, g):
        axes = self.attrs.get("axes") or tuple(reversed(range(g.ndim)))
        return (np.transpose(g, np.argsort(axes)),)


class Concat(Function):
    name = "concat"

    def forward(self, *xs, axis: int = 0):
        try:
            return np.concatenate(xs, axis=axis)
        except ValueError:
            raise ShapeError(f"concat: shapes {[x.shape for x in xs]} do not align on axis {axis}") from None

    def backward(self, g):
        axis = self.attrs.get("axis", 0)
        bounds = np.cumsum([t.shape[axis] for t in self.inputs])[:-1]
        parts = np.split(g, bounds, axis=axis)
        return tuple(p if self.needs(i) else None for i, p in enumerate(parts))


class GetItem(Function):
    name = "getitem"

    def forward(self, x, index: Any = None):
        return x[index]

    def backward(self, g):
        x = self.inputs[0]
        out = np.zeros(x.shape, dtype=g.dtype)
        np.add.at(out, self.attrs["index"], g)
        return (out,)


# ---------- reductions and norms ----------
class Sum(Function):
    name = "sum"

    def forward(self, x, axis: Any = None, keepdims: bool = False):
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, g):
        x = self.inputs[0]
        axis, keepdims = self.attrs.get("axis"), self.attrs.get("keepdims", False)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)


class Mean(Function):
    name = "mean"

    def forward(self, x, axis: Any = None, keepdims: bool = False):
        return np.asarray(x.mean(axis=axis, keepdims=keepdims))

    def backward(self, g):
        x = self.inputs[0]
        axis, keepdims = self.attrs.get("axis"), self.attrs.get("keepdims", False)
        n = x.size // max(int(np.prod(self.out_shape)), 1) if axis is not None else x.size
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape) / n,)


class L1Norm(Function):
    """Per-element mean absolute value."""

    name = "l1_norm"

    def forward(self, x):
        return np.asarray(np.abs(x).mean())

    def backward(self, g):
        x = self.inputs[0].data
        return (np.sign(x) * (g / x.size),)


class L2Norm(Function):
    """Euclidean norm along `axis` (keepdims), stabilized by `eps` under the root."""

    name = "l2_norm"

    def forward(self, x, axis: int = -1, eps: float = 1e-12):
        self.n = np.sqrt((x * x).sum(axis=axis, keepdims=True) + eps)
        return self.n

    def backward(self, g):
        return (g * self.inputs[0].data / self.n,)


PRIMITIVES: dict[str, type[Function]] = {
    cls.name: cls
    for cls in (
        Add, Sub, Mul, Div, Scale, MatMul, Conv2d, UpsampleNearest, AvgPool2d, GroupNorm, Film,
        ReLU, LeakyReLU, SiLU, Tanh, Softmax, LogSumExp, Attention, Reshape, Transpose, Concat,
        GetItem, Sum, Mean, L1Norm, L2Norm,
    )
}


def forward_eval(primitive: str, inputs: Sequence[Any], attrs: dict[str, Any] | None = None) -> Tensor:
    """Evaluate a cataloged primitive by name."""
    try:
        cls = PRIMITIVES[primitive]
    except KeyError:
        raise ValueError(f"unknown primitive {primitive!r}") from None
    return cls.apply(*inputs, **(attrs or {}))


# ---------- functional wrappers ----------
def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def div(a, b) -> Tensor:
    return Div.apply(a, b)


def scale(x, k: float) -> Tensor:
    return Scale.apply(x, k=float(k))


def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    if b is None:
        return Conv2d.apply(x, w, stride=stride, padding=padding)
    return Conv2d.apply(x, w, b, stride=stride, padding=padding)


def upsample_nearest(x, factor: int = 2) -> Tensor:
    return UpsampleNearest.apply(x, factor=factor)


def avg_pool2d(x, k: int = 2) -> Tensor:
    return AvgPool2d.apply(x, k=k)


def group_norm(x, gamma, beta, groups: int, eps: float = 1e-5) -> Tensor:
    return GroupNorm.apply(x, gamma, beta, groups=groups, eps=eps)


def film(x, scale_, shift) -> Tensor:
    return Film.apply(x, scale_, shift)


def relu(x) -> Tensor:
    return ReLU.apply(x)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    return LeakyReLU.apply(x, slope=slope)


def silu(x) -> Tensor:
    return SiLU.apply(x)


def tanh(x) -> Tensor:
    return Tanh.apply(x)


def softmax(x, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def logsumexp(x, axis: int = -1) -> Tensor:
    return LogSumExp.apply(x, axis=axis)


def attention(q, k, v, heads: int = 1) -> Tensor:
    return Attention.apply(q, k, v, heads=heads)


def reshape(x, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x, axes: Sequence[int] = ()) -> Tensor:
    return Transpose.apply(x, axes=tuple(axes))


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*xs, axis=axis)


def getitem(x, index: Any) -> Tensor:
    return GetItem.apply(x, index=index)


def sum(x, axis: Any = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis: Any = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def l1_norm(x) -> Tensor:
    return L1Norm.apply(x)


def l2_norm(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    return L2Norm.apply(x, axis=axis, eps=eps)


def normalize(x, axis: int = -1) -> Tensor:
    """Scale vectors along `axis` to unit Euclidean length."""
    return div(x, l2_norm(x, axis=axis))


def square(x) -> Tensor:
    return mul(x, x)


def mse(a, b) -> Tensor:
    d = sub(a, b)
    return mean(mul(d, d))


def mae(a, b) -> Tensor:
    return l1_norm(sub(a, b))
