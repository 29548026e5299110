from __future__ import annotations

import math

from ..models import TrainConfig


def lr_at(iteration: int, cfg: TrainConfig) -> tuple[float, float]:
    """(diffusion lr, translator lr) at `iteration`.

    The diffusion rate follows a half-cosine from start to end over total_iters and stays at
    the end value after that (the translator-only tail of a no-joint run); the
    translator/discriminator rate stays at its initial value.
    """
    if not 0 <= iteration <= cfg.run_iters:
        raise ValueError(f"iteration must lie in [0, {cfg.run_iters}] (got {iteration})")
    lo, hi = cfg.diffusion_lr_end, cfg.diffusion_lr_start
    if iteration == 0:
        lr = hi
    elif iteration >= cfg.total_iters:
        lr = lo
    else:
        frac = iteration / cfg.total_iters
        lr = lo + 0.5 * (hi - lo) * (1.0 + math.cos(math.pi * frac))
    return lr, cfg.translator_lr
