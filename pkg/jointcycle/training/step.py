"""One optimization step of joint training.

For the first `cfg.diffusion_iters` steps only the two denoisers train, on the diffusion
loss; that is `warmup_iters`, or `total_iters` under no-joint. Afterwards each
step is an alternating GAN update: the discriminators first (adversarial + contrastive
terms, translator outputs detached), then denoisers and translators together on the
remaining weighted terms with the discriminators held fixed.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np

from ..autodiff import Tensor, backward, no_grad
from ..diffusion import denoise, forward_diffuse, true_component
from ..errors import NonFiniteError, TrainingDiverged
from ..losses import (
    adversarial_loss,
    cycle_loss,
    dcl_loss,
    diffusion_loss,
    identity_loss,
    perceptual_loss,
    total_loss,
)
from ..models import TrainConfig
from ..translator import discriminate, translate
from .ema import ema_update
from .optim import clip_grad_norm
from .schedule import lr_at
from .state import EMA_NETS, TrainState, frozen

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("step", "phase", "lr_diffusion", "lr_translator", "dm", "adv", "cyc", "idt", "lps", "dcl", "adv_d", "total")


def _as_batch(x: Any) -> Tensor:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[:, None]
    return Tensor(arr, dtype=np.float32)


def step_noise(cfg: TrainConfig, iteration: int, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample t (shared by both domains) and one noise draw per domain, a pure function of (seed, iteration)."""
    rng = np.random.default_rng([cfg.seed, iteration])
    t = rng.uniform(0.0, 1.0, size=shape[0])
    eps_S = rng.standard_normal(shape).astype(np.float32)
    eps_T = rng.standard_normal(shape).astype(np.float32)
    return t, eps_S, eps_T


def _report(iteration: int, phase: str, lrs: tuple[float, float], terms: dict[str, float], adv_d: float, w) -> dict:
    row = {"step": iteration, "phase": phase, "lr_diffusion": lrs[0], "lr_translator": lrs[1]}
    for k in ("dm", "adv", "cyc", "idt", "lps", "dcl"):
        row[k] = float(terms.get(k, 0.0))
    row["adv_d"] = float(adv_d)
    row["total"] = float(total_loss({k: row[k] for k in ("dm", "adv", "cyc", "idt", "lps", "dcl")}, w))
    return row


def _warmup_step(x0_S: Tensor, x0_T: Tensor, state: TrainState, cfg: TrainConfig, iteration: int, lrs) -> dict:
    w = cfg.effective_weights()
    t, eps_S, eps_T = step_noise(cfg, iteration, x0_S.shape)
    dm = diffusion_loss(denoise(state.den_S, forward_diffuse(x0_S, t, eps_S), t), true_component(x0_S), Tensor(eps_S))
    dm = dm + diffusion_loss(denoise(state.den_T, forward_diffuse(x0_T, t, eps_T), t), true_component(x0_T), Tensor(eps_T))
    state.opt_diffusion.zero_grad()
    backward(dm * w.dm)
    clip_grad_norm(state.opt_diffusion.params, cfg.grad_clip)
    state.opt_diffusion.step(lrs[0])
    for name in ("den_S", "den_T"):
        ema_update(state.ema[name], getattr(state, name))
    return _report(iteration, "warmup", lrs, {"dm": dm.item()}, 0.0, w)


def _joint_step(x0_S: Tensor, x0_T: Tensor, state: TrainState, cfg: TrainConfig, iteration: int, lrs) -> dict:
    w = cfg.effective_weights()
    train_diffusion = not cfg.ablated("no-joint")
    use_component = not cfg.ablated("no-component")
    t, eps_S, eps_T = step_noise(cfg, iteration, x0_S.shape)
    xt_S = forward_diffuse(x0_S, t, eps_S)
    xt_T = forward_diffuse(x0_T, t, eps_T)

    # Discriminator step on detached translations.
    with no_grad():
        real_S = denoise(state.den_S, xt_S, t).C if use_component else xt_S
        real_T = denoise(state.den_T, xt_T, t).C if use_component else xt_T
        fake_T = translate(state.G, real_S, t)
        fake_S = translate(state.F, real_T, t)
    map_real_T, map_fake_T = discriminate(state.D_T, real_T), discriminate(state.D_T, fake_T)
    map_real_S, map_fake_S = discriminate(state.D_S, real_S), discriminate(state.D_S, fake_S)
    adv_d = adversarial_loss(map_real_T, map_fake_T, "discriminator") + adversarial_loss(
        map_real_S, map_fake_S, "discriminator"
    )
    dcl = dcl_loss(map_real_T, map_fake_T, cfg.dcl) + dcl_loss(map_real_S, map_fake_S, cfg.dcl)
    state.opt_disc.zero_grad()
    backward(adv_d * w.adv + dcl * w.dcl)
    clip_grad_norm(state.opt_disc.params, cfg.grad_clip)
    state.opt_disc.step(lrs[1])

    # Denoiser + translator step; discriminators fixed.
    hold = (state.D_S, state.D_T) if train_diffusion else (state.D_S, state.D_T, state.den_S, state.den_T)
    with frozen(*hold):
        pred_S = denoise(state.den_S, xt_S, t)
        pred_T = denoise(state.den_T, xt_T, t)
        parts: dict[str, Tensor] = {}
        if train_diffusion:
            parts["dm"] = diffusion_loss(pred_S, true_component(x0_S), Tensor(eps_S)) + diffusion_loss(
                pred_T, true_component(x0_T), Tensor(eps_T)
            )
        src_S = (pred_S.C if train_diffusion else pred_S.C.detach()) if use_component else xt_S
        src_T = (pred_T.C if train_diffusion else pred_T.C.detach()) if use_component else xt_T
        fake_T = translate(state.G, src_S, t)
        fake_S = translate(state.F, src_T, t)
        cyc_S = translate(state.F, fake_T, t)
        cyc_T = translate(state.G, fake_S, t)
        parts["adv"] = adversarial_loss(None, discriminate(state.D_T, fake_T), "generator") + adversarial_loss(
            None, discriminate(state.D_S, fake_S), "generator"
        )
        parts["cyc"] = cycle_loss(src_S, cyc_S, src_T, cyc_T)
        parts["idt"] = identity_loss(state.F, state.G, src_S, src_T, t)
        if w.lps > 0:
            parts["lps"] = perceptual_loss(state.extractor, src_S, cyc_S) + perceptual_loss(state.extractor, src_T, cyc_T)
        loss = total_loss(parts, w)
        state.opt_translator.zero_grad()
        state.opt_diffusion.zero_grad()
        backward(loss)
    clip_grad_norm(state.opt_translator.params, cfg.grad_clip)
    state.opt_translator.step(lrs[1])
    if train_diffusion:
        clip_grad_norm(state.opt_diffusion.params, cfg.grad_clip)
        state.opt_diffusion.step(lrs[0])
    for name in EMA_NETS:
        if train_diffusion or name in ("G", "F"):
            ema_update(state.ema[name], getattr(state, name))

    terms = {k: v.item() for k, v in parts.items()}
    terms["dcl"] = dcl.item()
    phase = "joint" if train_diffusion else "translator"
    return _report(iteration, phase, lrs, terms, adv_d.item(), w)


def train_step(batch_S: Any, batch_T: Any, state: TrainState, cfg: TrainConfig, iteration: int) -> dict:
    """Run one step and return its loss report (a flat dict keyed by LOSS_COLUMNS).

    Raises TrainingDiverged, carrying the last finite report, when any value goes non-finite.
    """
    if not 0 <= iteration < cfg.run_iters:
        raise ValueError(f"iteration {iteration} outside [0, {cfg.run_iters})")
    x0_S, x0_T = _as_batch(batch_S), _as_batch(batch_T)
    lrs = lr_at(iteration, cfg)
    try:
        if iteration < cfg.diffusion_iters:
            report = _warmup_step(x0_S, x0_T, state, cfg, iteration, lrs)
        else:
            report = _joint_step(x0_S, x0_T, state, cfg, iteration, lrs)
        if not np.isfinite(report["total"]):
            raise NonFiniteError(f"total loss is {report['total']}")
    except NonFiniteError as e:
        logger.error("step %d diverged: %s", iteration, e)
        raise TrainingDiverged(f"step {iteration}: {e}", last_report=state.last_report) from e
    if iteration == cfg.diffusion_iters and iteration > 0:
        logger.info("warmup finished at step %d; %s training starts", iteration, report["phase"])
    state.iteration = iteration + 1
    state.last_report = report
    logger.debug("step %d %s total=%.5f", iteration, report["phase"], report["total"])
    return report
