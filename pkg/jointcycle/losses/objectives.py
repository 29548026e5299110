"""Training objectives.

Every norm is a per-element mean so the weights do not depend on image resolution.
"""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np

from ..autodiff import Tensor
from ..autodiff import ops
from ..diffusion.process import ComponentPair
from ..errors import NonFiniteError, ShapeError
from ..models import DCLConfig, LossWeights
from ..nn import Module
from ..translator import translate

SIDES = ("generator", "discriminator")


def _same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")


def diffusion_loss(pred: ComponentPair, true_C: Tensor, true_eps: Tensor) -> Tensor:
    """mean((C_pred - C)^2) + mean((eps_pred - eps)^2)."""
    _same_shape("diffusion_loss", pred.C, true_C)
    _same_shape("diffusion_loss", pred.eps, true_eps)
    return ops.add(ops.mse(pred.C, true_C), ops.mse(pred.eps, true_eps))


def adversarial_loss(d_real: Tensor | None, d_fake: Tensor, side: str) -> Tensor:
    """Least-squares GAN loss with targets real -> 1, fake -> 0."""
    if side == "generator":
        return ops.mse(d_fake, 1.0)
    if side == "discriminator":
        if d_real is None:
            raise ValueError("discriminator side needs the real patch map")
        return ops.add(ops.mse(d_real, 1.0), ops.mean(ops.square(d_fake)))
    raise ValueError(f"side must be one of {', '.join(SIDES)} (got {side!r})")


def patch_vectors(patch_map: Tensor, reshape: str = "pixel") -> Tensor:
    """(B, N, h, w) patch map -> rows of feature vectors.

    "pixel" yields one N-vector per patch position (B*h*w rows); "column" yields one
    (N*h)-vector per patch column (B*w rows).
    """
    if patch_map.ndim != 4:
        raise ShapeError(f"patch map must be (B, N, h, w), got {patch_map.shape}")
    b, n, h, w = patch_map.shape
    if reshape == "pixel":
        return ops.reshape(ops.transpose(patch_map, (0, 2, 3, 1)), (b * h * w, n))
    if reshape == "column":
        return ops.reshape(ops.transpose(patch_map, (0, 3, 1, 2)), (b * w, n * h))
    raise ValueError(f"unknown DCL reshape {reshape!r}")


def unit_patch_vectors(patch_map: Tensor, reshape: str = "pixel") -> Tensor:
    return ops.normalize(patch_vectors(patch_map, reshape), axis=1)


def dcl_loss(real_map: Tensor, fake_map: Tensor, cfg: DCLConfig | None = None) -> Tensor:
    """Contrastive loss over L2-normalized patch vectors.

    Each real vector is an anchor; every other real vector is a positive, every fake vector
    a negative. Per anchor i:
        -1/(M-1) * sum_{j != i} log( exp(r_i.r_j/tau) / (sum_k exp(r_i.f_k/tau) + sum_{k != i} exp(r_i.r_k/tau)) )
    averaged over anchors.
    """
    cfg = cfg or DCLConfig()
    if real_map.shape[1] != fake_map.shape[1]:
        raise ShapeError(f"dcl_loss: real has {real_map.shape[1]} channels, fake has {fake_map.shape[1]}")
    real = unit_patch_vectors(real_map, cfg.reshape)
    fake = unit_patch_vectors(fake_map, cfg.reshape)
    m = real.shape[0]
    if m < 2:
        raise ValueError("dcl_loss needs at least 2 real vectors")

    inv_tau = 1.0 / cfg.tau
    s_rr = ops.scale(ops.matmul(real, ops.transpose(real, (1, 0))), inv_tau)
    s_rf = ops.scale(ops.matmul(real, ops.transpose(fake, (1, 0))), inv_tau)
    rows, cols = np.nonzero(~np.eye(m, dtype=bool))
    s_pos = ops.reshape(ops.getitem(s_rr, (rows, cols)), (m, m - 1))

    denom = ops.logsumexp(ops.concat([s_rf, s_pos], axis=1), axis=1)
    per_anchor = ops.sub(denom, ops.mean(s_pos, axis=1))
    return ops.mean(per_anchor)


def cycle_loss(C_src_S: Tensor, C_cyc_S: Tensor, C_src_T: Tensor, C_cyc_T: Tensor) -> Tensor:
    _same_shape("cycle_loss", C_src_S, C_cyc_S)
    _same_shape("cycle_loss", C_src_T, C_cyc_T)
    return ops.add(ops.mae(C_cyc_S, C_src_S), ops.mae(C_cyc_T, C_src_T))


def identity_loss(F: Module, G: Module, C_S: Tensor, C_T: Tensor, t: Any) -> Tensor:
    """|F(C_S, t) - C_S| + |G(C_T, t) - C_T| (per-element means)."""
    return ops.add(ops.mae(translate(F, C_S, t), C_S), ops.mae(translate(G, C_T, t), C_T))


def total_loss(parts: Mapping[str, Any], w: LossWeights | None = None) -> Any:
    """Weighted sum over the six terms; Tensor parts keep the graph, plain numbers give a float.

    Missing terms count as zero.
    """
    w = w or LossWeights()
    tensors = any(isinstance(v, Tensor) for v in parts.values())
    total: Any = None
    for term, weight in zip(LossWeights.TERMS, w.as_tuple()):
        if term not in parts:
            continue
        part = parts[term]
        arr = part.data if isinstance(part, Tensor) else np.asarray(part, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"loss term {term!r} is not finite")
        if tensors:
            scaled = ops.scale(part, weight) if isinstance(part, Tensor) else Tensor(np.float32(weight * float(part)))
            total = scaled if total is None else ops.add(total, scaled)
        else:
            total = weight * float(part) if total is None else total + weight * float(part)
    if total is None:
        return 0.0
    return total
