from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import CheckpointError
from ..nn import Parameter


class Adam:
    """Adaptive-moment optimizer over a fixed parameter list; `weight_decay` is an L2 term on the gradient."""

    decoupled = False

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.steps = 0
        self.m = [np.zeros(p.shape, dtype=p.dtype) for p in self.params]
        self.v = [np.zeros(p.shape, dtype=p.dtype) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.steps += 1
        c1 = 1.0 - b1**self.steps
        c2 = 1.0 - b2**self.steps
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            w = p.data
            if self.weight_decay and not self.decoupled:
                g = g + self.weight_decay * w
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            update = (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            if self.weight_decay and self.decoupled:
                w = w * (1.0 - lr * self.weight_decay)
            p.assign(w - lr * update)

    def state_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"steps": np.array([self.steps], dtype=np.float64)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m.{i}"] = m
            out[f"v.{i}"] = v
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        try:
            self.steps = int(np.asarray(state["steps"]).reshape(-1)[0])
            m = [np.asarray(state[f"m.{i}"], dtype=p.dtype) for i, p in enumerate(self.params)]
            v = [np.asarray(state[f"v.{i}"], dtype=p.dtype) for i, p in enumerate(self.params)]
        except KeyError as e:
            raise CheckpointError(f"optimizer state is missing {e.args[0]!r}") from None
        for i, p in enumerate(self.params):
            if m[i].shape != p.shape or v[i].shape != p.shape:
                raise CheckpointError(f"optimizer moment {i} has shape {m[i].shape}, parameter has {p.shape}")
        self.m, self.v = m, v


class AdamW(Adam):
    """Adam with decoupled weight decay (applied to the weights, not the gradient)."""

    decoupled = True


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Rescale gradients so their global L2 norm is at most `max_norm`; returns the pre-clip norm."""
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if max_norm > 0 and total > max_norm:
        k = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = (p.grad * k).astype(p.dtype)
    return total
