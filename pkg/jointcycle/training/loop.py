from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from tqdm import tqdm

from .. import config
from ..io import images
from ..io.artifacts import append_csv
from ..models import TASK_MODES, SamplerConfig, TrainConfig
from ..sampling import translate_set
from .batches import DomainSampler, prefetch
from .checkpoint import load_checkpoint, save_checkpoint
from .state import TrainState, build_state, ema_weights
from .step import LOSS_COLUMNS, train_step

logger = logging.getLogger(__name__)

SAMPLE_GRID = 4
SAMPLE_STEPS = 20


def write_samples(path: Path, state: TrainState, sources: np.ndarray, steps: int = SAMPLE_STEPS) -> None:
    """Grid of source images (top row) over their S->T translations with the EMA weights.

    One image per chunk, spread over cfg.threads workers.
    """
    sc = SamplerConfig.for_mode(TASK_MODES[state.cfg.task], steps=steps, seed=state.cfg.seed)
    sub = "state" if state.cfg.ablated("no-component") else "component"
    with ema_weights(state):
        out = translate_set(sources, state.den_S, state.G, state.den_T, sc, substitution=sub, chunk=1, threads=state.cfg.threads)
    images.save_image(path, images.make_grid(np.concatenate([sources, out]), ncol=len(sources)))


def train_run(
    cfg: TrainConfig,
    run_dir: Path,
    data_S: np.ndarray,
    data_T: np.ndarray,
    resume: Path | None = None,
    progress: bool = True,
) -> TrainState:
    """Train to cfg.run_iters, writing losses.csv, checkpoints and sample grids under run_dir."""
    run_dir = Path(run_dir)
    state = load_checkpoint(resume, cfg) if resume else build_state(cfg)
    if tuple(data_S.shape[1:]) != cfg.image_shape or tuple(data_T.shape[1:]) != cfg.image_shape:
        raise ValueError(f"training images {data_S.shape[1:]} / {data_T.shape[1:]} do not match {cfg.image_shape}")
    samp_S = DomainSampler(len(data_S), cfg.batch_size, cfg.seed, config.SEED_STREAM_S)
    samp_T = DomainSampler(len(data_T), cfg.batch_size, cfg.seed, config.SEED_STREAM_T)

    def batch(i: int) -> tuple[int, np.ndarray, np.ndarray]:
        return i, data_S[samp_S.indices(i)], data_T[samp_T.indices(i)]

    ckpt_dir = run_dir / "checkpoints"
    losses_path = run_dir / "losses.csv"
    pending: list[dict] = []
    start = state.iteration
    logger.info("training %s/%s from step %d to %d", cfg.preset, cfg.task, start, cfg.run_iters)
    bar = tqdm(total=cfg.run_iters, initial=start, desc="train", disable=not progress)
    try:
        for i, xs, xt in prefetch(batch, start, cfg.run_iters):
            report = train_step(xs, xt, state, cfg, i)
            pending.append(report)
            bar.update(1)
            done = i + 1
            if done % cfg.log_every == 0 or done == cfg.run_iters:
                append_csv(losses_path, LOSS_COLUMNS, pending)
                pending = []
                bar.set_postfix(phase=report["phase"], total=f"{report['total']:.4f}")
            if done % cfg.checkpoint_every == 0 or done == cfg.run_iters:
                save_checkpoint(ckpt_dir / f"step_{done}.ckpt", state)
                save_checkpoint(ckpt_dir / "latest.ckpt", state)
            if done % cfg.sample_every == 0:
                write_samples(run_dir / "samples" / f"step_{done}.png", state, data_S[:SAMPLE_GRID])
    finally:
        bar.close()
        if pending:
            append_csv(losses_path, LOSS_COLUMNS, pending)
    logger.info("training finished at step %d", state.iteration)
    return state
