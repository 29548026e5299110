from __future__ import annotations

from typing import Any, Callable, Sequence

import numpy as np

from .ops import forward_eval
from .tensor import Tensor, backward


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def grad_check_fn(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    step: float = 1e-4,
    wrt: Sequence[int] | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients of `fn`.

    Non-scalar outputs are contracted with a fixed random projection first, so every output
    coordinate contributes to the checked scalar.
    """
    if not 1e-6 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-6, 1e-3]")
    arrays = [np.asarray(a) for a in inputs]
    for a in arrays:
        if a.dtype != np.float64:
            raise ValueError("grad_check needs float64 inputs")
    wrt = list(range(len(arrays))) if wrt is None else list(wrt)

    first = fn(*[Tensor(a, dtype=np.float64) for a in arrays])
    proj = np.random.default_rng(seed).standard_normal(first.shape)

    def scalar(*xs: Tensor) -> Tensor:
        out = fn(*xs)
        return (out * Tensor(proj, dtype=np.float64)).sum() if out.size != 1 else out.reshape(())

    leaves = [Tensor(a, requires_grad=(i in wrt), dtype=np.float64) for i, a in enumerate(arrays)]
    backward(scalar(*leaves))

    worst = 0.0
    for i in wrt:
        analytic = leaves[i].grad if leaves[i].grad is not None else np.zeros_like(arrays[i])
        numeric = np.zeros_like(arrays[i])
        flat = numeric.reshape(-1)
        for j in range(arrays[i].size):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[i].reshape(-1)[j] += step
            minus[i].reshape(-1)[j] -= step
            fp = scalar(*[Tensor(a, dtype=np.float64) for a in plus]).item()
            fm = scalar(*[Tensor(a, dtype=np.float64) for a in minus]).item()
            flat[j] = (fp - fm) / (2.0 * step)
        worst = max(worst, _relative_error(analytic, numeric))
    return worst


def grad_check(
    primitive: str,
    inputs: Sequence[np.ndarray],
    step: float = 1e-4,
    attrs: dict[str, Any] | None = None,
    wrt: Sequence[int] | None = None,
    seed: int = 0,
) -> float:
    """Finite-difference check of one cataloged primitive."""
    return grad_check_fn(lambda *xs: forward_eval(primitive, xs, attrs), inputs, step=step, wrt=wrt, seed=seed)
