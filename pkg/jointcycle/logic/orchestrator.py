from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .. import config
from ..data_sources.manifests import (
    IMAGE_SUFFIXES,
    load_domain,
    load_entries,
    make_paired_eval,
    make_unpaired_split,
    manifest_path,
    read_manifest,
)
from ..errors import JointCycleError, ManifestError
from ..io import images
from ..io.artifacts import read_csv, read_kv, run_dir_for, safe_filename, write_csv, write_kv
from ..metrics.evaluate import append_ledger, evaluate_run, write_report
from ..models import TASK_MODES, EvalReport, RunConfig, SamplerConfig, TrainConfig
from ..sampling import CHUNK_SIZE, translate_set
from ..training import LOSS_COLUMNS, ema_weights, load_checkpoint, train_run

logger = logging.getLogger(__name__)

ENV_KEYS = {config.ENV_SEED: "seed", config.ENV_THREADS: "threads"}
DIRECTIONS = ("S2T", "T2S")
LOSS_SERIES = tuple(c for c in LOSS_COLUMNS if c not in {"step", "phase"})
METRIC_SERIES = ("ssim", "mmd", "edge_f1", "cycle_l1")


def resolve_run_config(
    *,
    base: Mapping[str, Any],
    config_file: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    run_dir: Path | None = None,
    name: str | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    """Merge base < config file < environment < overrides into one flat RunConfig.

    `sources` records where each key's final value came from. Keys absent from `base`
    are rejected so a typo in a file or flag fails before anything runs.
    """
    environ = os.environ if environ is None else environ
    values = {k: str(v) for k, v in base.items()}
    sources = {k: "default" for k in values}

    def merge(layer: Mapping[str, Any], origin: str) -> None:
        for k, v in layer.items():
            if k not in values:
                raise ValueError(f"unknown config key {k!r} (from {origin})")
            values[k] = str(v)
            sources[k] = origin

    if config_file is not None:
        merge(read_kv(Path(config_file)), f"file:{config_file}")
    merge({key: environ[var] for var, key in ENV_KEYS.items() if environ.get(var) and key in values}, "env")
    merge({k: v for k, v in (overrides or {}).items() if v is not None}, "flag")
    rd = Path(run_dir) if run_dir else run_dir_for(name)
    return RunConfig(values=values, run_dir=str(rd), sources=sources)


def write_run_config(rc: RunConfig) -> Path:
    path = Path(rc.run_dir) / "config.txt"
    write_kv(path, rc.values, header=f"run_dir={rc.run_dir}")
    return path


def train_base(preset: str | None, config_file: Path | None = None) -> dict[str, str]:
    """Flat defaults of the preset named by `preset` or, failing that, by the config file."""
    name = preset
    if name is None and config_file is not None:
        name = read_kv(Path(config_file)).get("preset")
    return TrainConfig.preset_named(name or "desk").to_flat()


def train_config(rc: RunConfig) -> TrainConfig:
    return TrainConfig.from_flat(rc.values)


def gen_data(
    *,
    task: str,
    n: int,
    seed: int,
    n_eval: int = config.EVAL_PAIRS,
    data_dir: Path = config.DATA_DIR,
    size: int = config.IMAGE_SIZE,
    fmt: str = ".pgm",
    threads: int = 1,
) -> dict[str, Any]:
    man_S, man_T = make_unpaired_split(n, n, seed, task=task, data_dir=data_dir, size=size, fmt=fmt, threads=threads)
    man_eval = make_paired_eval(n_eval, seed, task=task, data_dir=data_dir, size=size, fmt=fmt, threads=threads)
    return {
        "task": task,
        "seed": seed,
        "n_S": man_S.count,
        "n_T": man_T.count,
        "n_eval_pairs": man_eval.count // 2,
        "manifests": {split: str(manifest_path(data_dir, task, split)) for split in ("S", "T", "eval")},
    }


def train(rc: RunConfig, *, resume: Path | None = None, progress: bool = True) -> dict[str, Any]:
    cfg = train_config(rc)
    write_run_config(rc)
    data_S = load_domain(manifest_path(Path(cfg.data_dir), cfg.task, "S"), channels=cfg.channels)
    data_T = load_domain(manifest_path(Path(cfg.data_dir), cfg.task, "T"), channels=cfg.channels)
    state = train_run(cfg, Path(rc.run_dir), data_S, data_T, resume=resume, progress=progress)
    return {
        "run_dir": rc.run_dir,
        "iteration": state.iteration,
        "threads": cfg.threads,
        "checkpoint": str(Path(rc.run_dir) / "checkpoints" / "latest.ckpt"),
        "last_report": state.last_report,
    }


def _input_images(path: Path, channels: int) -> tuple[list[str], np.ndarray]:
    """Names and stacked images of a manifest, a directory of images, or one image file."""
    path = Path(path)
    if path.is_file() and path.suffix == ".txt":
        m = read_manifest(path)
        return [Path(e.path).stem for e in m.entries], load_entries(path, m.entries, channels)
    files = sorted(p for p in path.iterdir() if p.suffix in IMAGE_SUFFIXES) if path.is_dir() else [path]
    if not files:
        raise ManifestError(f"no input images under {path}")
    arrays = [images.load_raw(p) if p.suffix == ".raw" else images.load_image(p, channels) for p in files]
    if len({a.shape for a in arrays}) != 1:
        raise ManifestError(f"{path}: mixed image shapes")
    return [p.stem for p in files], np.stack(arrays).astype(np.float32)


def translate(
    *,
    checkpoint: Path,
    inputs: Path,
    out_dir: Path,
    direction: str = "S2T",
    steps: int | None = None,
    seed: int = config.DEFAULT_SEED,
    fmt: str = ".png",
    threads: int = 1,
    chunk: int = CHUNK_SIZE,
    progress: bool = True,
) -> dict[str, Any]:
    """Translate every input image; writes `<stem>_<direction><fmt>` under out_dir.

    Inputs are split into chunks of `chunk` images spread over `threads` workers; the output does not
    depend on the thread count.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {', '.join(DIRECTIONS)}")
    state = load_checkpoint(checkpoint)
    cfg = state.cfg
    names, x0 = _input_images(inputs, cfg.channels)
    sc = SamplerConfig.for_mode(TASK_MODES[cfg.task], steps=steps, seed=seed)
    if direction == "S2T":
        netS, trans, netT = state.den_S, state.G, state.den_T
    else:
        netS, trans, netT = state.den_T, state.F, state.den_S
    logger.info("translating %d images %s with %d steps (%s) on %d threads", len(names), direction, sc.steps, sc.mode, threads)
    with ema_weights(state):
        out = translate_set(
            x0,
            netS,
            trans,
            netT,
            sc,
            substitution="state" if cfg.ablated("no-component") else "component",
            chunk=chunk,
            threads=threads,
            progress=progress,
        )
    out_dir = Path(out_dir)
    written = []
    for name, img in zip(names, out):
        p = out_dir / f"{safe_filename(name)}_{direction}{fmt}"
        if fmt == ".raw":
            images.save_raw(p, img, meta={"direction": direction, "steps": str(sc.steps)})
        else:
            images.save_image(p, img)
        written.append(str(p))
    return {"direction": direction, "steps": sc.steps, "seed": seed, "threads": threads, "outputs": written}


def evaluate(
    *,
    checkpoint: Path,
    manifest: Path,
    run_dir: Path,
    steps: int | None = None,
    seed: int = config.DEFAULT_SEED,
    limit: int | None = None,
    threads: int = 1,
    ledger: Path = config.LEDGER_PATH,
    progress: bool = True,
) -> tuple[EvalReport, Path]:
    report = evaluate_run(checkpoint, manifest, steps=steps, seed=seed, limit=limit, threads=threads, progress=progress)
    path = Path(run_dir) / "eval" / "report.txt"
    write_report(path, report)
    append_ledger(report, Path(run_dir), ledger)
    return report, path


def export_plot_data(*, run_dir: Path, out_dir: Path | None = None, ledger: Path = config.LEDGER_PATH) -> dict[str, Any]:
    """One step,value CSV per loss term, plus metric-vs-iteration rows from the ledger."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / "plots"
    ledger = Path(ledger)
    if not ledger.exists():
        raise JointCycleError(f"run ledger not found: {ledger}")
    losses = run_dir / "losses.csv"
    if not losses.exists():
        raise JointCycleError(f"no loss log in {run_dir}")
    rows = read_csv(losses)
    files: dict[str, str] = {}
    for term in LOSS_SERIES:
        p = out_dir / f"loss_{term}.csv"
        write_csv(p, ("step", "phase", "value"), ({"step": r["step"], "phase": r["phase"], "value": r[term]} for r in rows))
        files[f"loss_{term}"] = str(p)
    mine = [r for r in read_csv(ledger) if Path(r.get("run_dir", "")) == run_dir]
    mine.sort(key=lambda r: (int(r["iteration"] or 0), int(r["steps"] or 0)))
    p = out_dir / "metrics_vs_step.csv"
    write_csv(p, ("iteration", "steps", "seed") + METRIC_SERIES, mine)
    files["metrics_vs_step"] = str(p)
    logger.info("exported %d loss rows and %d ledger rows to %s", len(rows), len(mine), out_dir)
    return {"run_dir": str(run_dir), "out_dir": str(out_dir), "files": files, "loss_rows": len(rows), "eval_rows": len(mine)}
