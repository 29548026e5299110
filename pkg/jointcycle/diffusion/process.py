"""Decoupled forward process with a constant image component.

Corruption splits into an attenuation term driven by the component C and additive noise
scaled by t. With the constant parameterization C = -x0 the state at time t is
x_t = x0 + t*C + t*eps = (1 - t)*x0 + t*eps, so the image is fully attenuated at t = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from ..autodiff import Tensor
from ..autodiff import ops
from ..errors import NonFiniteError, ShapeError


@dataclass(frozen=True)
class DiffusionState:
    x_t: Tensor
    t: float

    def validate(self, image_shape: tuple[int, ...]) -> None:
        check_time(self.t)
        if tuple(self.x_t.shape[-len(image_shape) :]) != tuple(image_shape):
            raise ShapeError(f"state shape {self.x_t.shape} does not end with image shape {image_shape}")


@dataclass(frozen=True)
class ComponentPair:
    """Denoiser output: image-component estimate C and noise estimate eps."""

    C: Tensor
    eps: Tensor

    def validate(self) -> None:
        if self.C.shape != self.eps.shape:
            raise ShapeError(f"component {self.C.shape} and noise {self.eps.shape} shapes differ")
        for name, t in (("C", self.C), ("eps", self.eps)):
            if not np.all(np.isfinite(t.data)):
                raise NonFiniteError(f"{name} estimate is not finite")


def check_time(t: Any) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if arr.size == 0 or np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"t must lie in [0, 1] (got {t!r})")
    return arr


def _time_tensor(t: Any, like: Tensor) -> Tensor:
    arr = check_time(t)
    if arr.ndim == 0:
        return Tensor(arr, dtype=like.dtype)
    if arr.shape != (like.shape[0],):
        raise ShapeError(f"per-sample t of shape {arr.shape} does not match batch {like.shape[0]}")
    return Tensor(arr.reshape((-1,) + (1,) * (like.ndim - 1)), dtype=like.dtype)


def _as_tensor(x: Any) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=np.asarray(x).dtype if np.asarray(x).dtype.kind == "f" else None)


def true_component(x0: Any) -> Tensor:
    """The constant image component satisfying x0 + C = 0."""
    return ops.scale(_as_tensor(x0), -1.0)


def forward_diffuse(x0: Any, t: Any, eps: Any) -> Tensor:
    """x_t = (1 - t) * x0 + t * eps; `t` may be a scalar or one value per batch element."""
    x0, eps = _as_tensor(x0), _as_tensor(eps)
    if x0.shape != eps.shape:
        raise ShapeError(f"noise shape {eps.shape} does not match image shape {x0.shape}")
    tt = _time_tensor(t, x0)
    keep = ops.sub(1.0, tt)
    return ops.add(ops.mul(x0, keep), ops.mul(eps, tt))


def diffuse_with_components(x0: Any, t: Any, C: Any, eps: Any) -> Tensor:
    """x0 + t*C + t*eps: the state implied by a (possibly predicted) component/noise pair."""
    x0, C, eps = _as_tensor(x0), _as_tensor(C), _as_tensor(eps)
    tt = _time_tensor(t, x0)
    return ops.add(x0, ops.mul(ops.add(C, eps), tt))
