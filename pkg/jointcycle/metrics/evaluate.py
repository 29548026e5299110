from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import numpy as np

from .. import config
from ..autodiff import no_grad
from ..diffusion import denoise, forward_diffuse
from ..errors import ManifestError, ShapeError
from ..io.artifacts import append_csv, utcstamp, write_kv
from ..models import TASK_MODES, EvalReport, SamplerConfig
from ..nn import Module
from ..sampling import translate_set
from ..translator import cycle
from ..data_sources.manifests import load_pairs
from ..training import ema_weights, load_checkpoint
from .mmd import mmd
from .similarity import edge_f1, ssim

logger = logging.getLogger(__name__)

CYCLE_TIMES = (0.25, 0.5, 0.75)

LEDGER_COLUMNS = [
    "ts_utc",
    "run_dir",
    "checkpoint",
    "task",
    "preset",
    "translator",
    "ablate",
    "seed",
    "iteration",
    "steps",
    "n",
    "ssim",
    "mmd",
    "edge_f1",
    "cycle_l1",
]


def component_cycle_l1(
    sources: np.ndarray,
    netS: Module,
    G: Module,
    F: Module,
    seed: int,
    on_state: bool = False,
    times: tuple[float, ...] = CYCLE_TIMES,
) -> float:
    """Mean |F(G(C)) - C| over the source set at a few fixed diffusion times."""
    rng = np.random.default_rng([seed, 1])
    total = 0.0
    with no_grad():
        for t in times:
            eps = rng.standard_normal(sources.shape).astype(np.float32)
            x_t = forward_diffuse(sources, t, eps)
            src = x_t if on_state else denoise(netS, x_t, t).C
            back = cycle(F, G, src, t)
            total += float(np.mean(np.abs(back.data - src.data)))
    return total / len(times)


def evaluate_translations(
    sources: np.ndarray,
    translated: np.ndarray,
    targets: np.ndarray,
    cycle_l1: float,
    cross_modality: bool,
    meta: dict[str, Any] | None = None,
) -> EvalReport:
    """Score a translated set; the unbiased MMD estimate is clipped at zero for the report."""
    if sources.shape != translated.shape or translated.shape != targets.shape:
        raise ShapeError(f"eval sets disagree: {sources.shape}, {translated.shape}, {targets.shape}")
    report = EvalReport(
        ssim=ssim(sources, translated),
        mmd=max(mmd(translated, targets), 0.0),
        cycle_l1=float(cycle_l1),
        edge_f1=edge_f1(translated, targets) if cross_modality else None,
        meta=dict(meta or {}),
    )
    report.validate()
    return report


def evaluate_run(
    checkpoint: Path,
    manifest: Path,
    steps: int | None = None,
    seed: int = config.DEFAULT_SEED,
    limit: int | None = None,
    threads: int = 1,
    progress: bool = False,
) -> EvalReport:
    """Translate every eval source S -> T with the EMA weights and score the result."""
    state = load_checkpoint(checkpoint)
    cfg = state.cfg
    sources, targets, m = load_pairs(manifest, channels=cfg.channels)
    if m.task != cfg.task:
        raise ManifestError(f"eval manifest is for task {m.task!r}, checkpoint was trained on {cfg.task!r}")
    if tuple(sources.shape[1:]) != cfg.image_shape:
        raise ShapeError(f"eval images {sources.shape[1:]} do not match checkpoint {cfg.image_shape}")
    if limit is not None:
        sources, targets = sources[:limit], targets[:limit]
    mode = TASK_MODES[cfg.task]
    sc = SamplerConfig.for_mode(mode, steps=steps, seed=seed)
    no_component = cfg.ablated("no-component")
    logger.info("evaluating %s on %d pairs with %d steps", checkpoint, len(sources), sc.steps)
    with ema_weights(state):
        translated = translate_set(
            sources,
            state.den_S,
            state.G,
            state.den_T,
            sc,
            substitution="state" if no_component else "component",
            threads=threads,
            progress=progress,
        )
        cyc = component_cycle_l1(sources, state.den_S, state.G, state.F, seed, on_state=no_component)
    meta = {
        "checkpoint": str(checkpoint),
        "iteration": state.iteration,
        "task": cfg.task,
        "preset": cfg.preset,
        "translator": cfg.translator_preset,
        "ablate": ",".join(cfg.ablations),
        "seed": seed,
        "steps": sc.steps,
        "n": len(sources),
    }
    report = evaluate_translations(sources, translated, targets, cyc, mode == "cross-modality", meta)
    logger.info("eval done: ssim=%.4f mmd=%.5f edge_f1=%s", report.ssim, report.mmd, report.edge_f1)
    return report


def report_values(report: EvalReport) -> dict[str, Any]:
    values: dict[str, Any] = {
        "ssim": repr(report.ssim),
        "mmd": repr(report.mmd),
        "cycle_l1": repr(report.cycle_l1),
        "edge_f1": "" if report.edge_f1 is None else repr(report.edge_f1),
    }
    for k, v in report.meta.items():
        values[f"meta.{k}"] = v
    return values


def write_report(path: Path, report: EvalReport) -> None:
    write_kv(path, report_values(report), header=f"eval report {utcstamp()}")


def append_ledger(report: EvalReport, run_dir: Path, ledger: Path = config.LEDGER_PATH) -> None:
    row = {k: report.meta.get(k, "") for k in LEDGER_COLUMNS}
    row.update(
        ts_utc=utcstamp(),
        run_dir=str(run_dir),
        ssim=report.ssim,
        mmd=report.mmd,
        cycle_l1=report.cycle_l1,
        edge_f1="" if report.edge_f1 is None else report.edge_f1,
    )
    append_csv(Path(ledger), LEDGER_COLUMNS, [row])
