#!/usr/bin/env python3
"""Joint cycle-consistent diffusion translation CLI.

Subcommands:
  - gen-data: render the unpaired S/T training sets and the paired eval set
  - train: warmup + joint training into a run directory
  - translate: translate images with a checkpoint (S2T or T2S)
  - eval: score a checkpoint on the paired eval set; appends to runs/ledger.csv
  - plot: export loss and metric series of a run as CSV
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

# Ensure repo root is on sys.path when invoked as a script.
BASE_DIR = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(BASE_DIR))

BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def blas_threads(argv: list[str], environ: dict[str, str]) -> str:
    """Thread count for the BLAS pools: `--threads` flag, then JOINTCYCLE_THREADS, then 1."""
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--threads="):
            return arg.split("=", 1)[1]
    return environ.get("JOINTCYCLE_THREADS") or "1"


# BLAS pools are sized when numpy loads, so this runs before any jointcycle import.
for _var in BLAS_VARS:
    os.environ.setdefault(_var, blas_threads(sys.argv[1:], dict(os.environ)))

from jointcycle import config
from jointcycle.errors import JointCycleError
from jointcycle.io.artifacts import ensure_state_dirs, parse_kv
from jointcycle.logic import orchestrator
from jointcycle.models import ABLATIONS, TASKS, TRANSLATOR_DEPTHS
from jointcycle.sampling import CHUNK_SIZE

logger = logging.getLogger("jointcycle")


def _overrides(args: argparse.Namespace, **flags: object) -> dict[str, object]:
    """--set pairs first, then dedicated flags (which win)."""
    out: dict[str, object] = dict(parse_kv("\n".join(args.set or []), source="--set"))
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _resolve(args: argparse.Namespace, base: dict, run_dir: Path | None, **flags: object):
    return orchestrator.resolve_run_config(
        base=base,
        config_file=Path(args.config) if args.config else None,
        overrides=_overrides(args, **flags),
        run_dir=run_dir,
        name=getattr(args, "name", None),
    )


def _print(out: dict) -> None:
    print(json.dumps(out, indent=2, sort_keys=True, default=str), flush=True)


def cmd_gen_data(args: argparse.Namespace) -> int:
    ensure_state_dirs()
    base = {
        "task": args.task,
        "n": 500,
        "n_eval": config.EVAL_PAIRS,
        "seed": config.DEFAULT_SEED,
        "size": config.IMAGE_SIZE,
        "fmt": ".pgm",
        "data_dir": str(config.DATA_DIR),
        "threads": config.DEFAULT_THREADS,
    }
    data_dir = Path(args.data_dir) if args.data_dir else None
    rc = _resolve(
        args,
        base,
        (data_dir or config.DATA_DIR) / args.task,
        n=args.n,
        n_eval=args.n_eval,
        seed=args.seed,
        size=args.size,
        fmt=args.fmt,
        data_dir=args.data_dir,
        threads=args.threads,
    )
    v = rc.values
    orchestrator.write_run_config(rc)
    out = orchestrator.gen_data(
        task=v["task"],
        n=int(v["n"]),
        seed=int(v["seed"]),
        n_eval=int(v["n_eval"]),
        data_dir=Path(v["data_dir"]),
        size=int(v["size"]),
        fmt=v["fmt"],
        threads=int(v["threads"]),
    )
    _print(out)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    ensure_state_dirs()
    config_file = Path(args.config) if args.config else None
    base = orchestrator.train_base(args.preset, config_file)
    rc = _resolve(
        args,
        base,
        Path(args.run_dir) if args.run_dir else None,
        preset=args.preset,
        task=args.task,
        seed=args.seed,
        threads=args.threads,
        total_iters=args.iters,
        translator_preset=args.translator_preset,
        data_dir=args.data_dir,
        ablate=",".join(args.ablate) if args.ablate else None,
    )
    out = orchestrator.train(rc, resume=Path(args.resume) if args.resume else None, progress=not args.quiet)
    _print(out)
    return 0


def cmd_translate(args: argparse.Namespace) -> int:
    ensure_state_dirs()
    base = {
        "checkpoint": "",
        "input": "",
        "direction": "S2T",
        "steps": "",
        "seed": config.DEFAULT_SEED,
        "fmt": ".png",
        "threads": config.DEFAULT_THREADS,
        "chunk": CHUNK_SIZE,
    }
    rc = _resolve(
        args,
        base,
        Path(args.run_dir) if args.run_dir else None,
        checkpoint=args.checkpoint,
        input=args.input,
        direction=args.direction,
        steps=args.steps,
        seed=args.seed,
        fmt=args.fmt,
        threads=args.threads,
    )
    v = rc.values
    orchestrator.write_run_config(rc)
    out = orchestrator.translate(
        checkpoint=Path(v["checkpoint"]),
        inputs=Path(v["input"]),
        out_dir=Path(rc.run_dir) / "translated",
        direction=v["direction"],
        steps=int(v["steps"]) if v["steps"] else None,
        seed=int(v["seed"]),
        fmt=v["fmt"],
        threads=int(v["threads"]),
        chunk=int(v["chunk"]),
        progress=not args.quiet,
    )
    out["run_dir"] = rc.run_dir
    _print(out)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    ensure_state_dirs()
    base = {
        "checkpoint": "",
        "manifest": "",
        "steps": "",
        "seed": config.DEFAULT_SEED,
        "limit": "",
        "threads": config.DEFAULT_THREADS,
    }
    ckpt = Path(args.checkpoint)
    # Reports land next to the run that produced the checkpoint unless told otherwise.
    default_run = ckpt.parent.parent if ckpt.parent.name == "checkpoints" else ckpt.parent
    rc = _resolve(
        args,
        base,
        Path(args.run_dir) if args.run_dir else default_run,
        checkpoint=args.checkpoint,
        manifest=args.manifest,
        steps=args.steps,
        seed=args.seed,
        limit=args.limit,
        threads=args.threads,
    )
    v = rc.values
    report, path = orchestrator.evaluate(
        checkpoint=Path(v["checkpoint"]),
        manifest=Path(v["manifest"]),
        run_dir=Path(rc.run_dir),
        steps=int(v["steps"]) if v["steps"] else None,
        seed=int(v["seed"]),
        limit=int(v["limit"]) if v["limit"] else None,
        threads=int(v["threads"]),
        ledger=Path(args.ledger),
        progress=not args.quiet,
    )
    out = report.to_dict()
    out["report"] = str(path)
    _print(out)
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    out = orchestrator.export_plot_data(
        run_dir=Path(args.run_dir),
        out_dir=Path(args.out_dir) if args.out_dir else None,
        ledger=Path(args.ledger),
    )
    _print(out)
    return 0


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="Flat key=value config file")
    p.add_argument("--set", action="append", default=None, metavar="KEY=VALUE", help="Override one config key")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jointcycle")
    ap.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_gen = sub.add_parser("gen-data", help="Render unpaired training sets and the paired eval set")
    _common(p_gen)
    p_gen.add_argument("--task", required=True, choices=TASKS)
    p_gen.add_argument("--n", type=int, default=None, help="Images per training domain (default 500)")
    p_gen.add_argument("--n-eval", type=int, default=None, help=f"Eval pairs (default {config.EVAL_PAIRS})")
    p_gen.add_argument("--size", type=int, default=None)
    p_gen.add_argument("--fmt", default=None, choices=(".pgm", ".png", ".raw"))
    p_gen.add_argument("--data-dir", default=None)
    p_gen.set_defaults(func=cmd_gen_data)

    p_train = sub.add_parser("train", help="Warmup + joint training")
    _common(p_train)
    p_train.add_argument("--preset", default=None, choices=("desk", "full"))
    p_train.add_argument("--task", default=None, choices=TASKS)
    p_train.add_argument("--iters", type=int, default=None, help="Override total_iters")
    p_train.add_argument("--translator-preset", default=None, choices=tuple(TRANSLATOR_DEPTHS))
    p_train.add_argument("--ablate", action="append", default=None, choices=ABLATIONS)
    p_train.add_argument("--data-dir", default=None)
    p_train.add_argument("--run-dir", default=None)
    p_train.add_argument("--name", default=None, help="Run name under runs/ (default: timestamp)")
    p_train.add_argument("--resume", default=None, help="Checkpoint to resume from")
    p_train.add_argument("--quiet", action="store_true", help="No progress bar")
    p_train.set_defaults(func=cmd_train)

    p_tr = sub.add_parser("translate", help="Translate images with a checkpoint")
    _common(p_tr)
    p_tr.add_argument("--checkpoint", required=True)
    p_tr.add_argument("--input", required=True, help="Image file, directory of images, or manifest")
    p_tr.add_argument("--direction", default=None, choices=orchestrator.DIRECTIONS)
    p_tr.add_argument("--steps", type=int, default=None, help="Default: 100 same-modality, 200 cross-modality")
    p_tr.add_argument("--fmt", default=None, choices=(".png", ".pgm", ".raw"))
    p_tr.add_argument("--run-dir", default=None)
    p_tr.add_argument("--name", default=None)
    p_tr.add_argument("--quiet", action="store_true")
    p_tr.set_defaults(func=cmd_translate)

    p_eval = sub.add_parser("eval", help="Score a checkpoint on the paired eval set")
    _common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True, help="Paired eval manifest")
    p_eval.add_argument("--steps", type=int, default=None)
    p_eval.add_argument("--limit", type=int, default=None, help="Use only the first N pairs")
    p_eval.add_argument("--run-dir", default=None)
    p_eval.add_argument("--ledger", default=str(config.LEDGER_PATH))
    p_eval.add_argument("--quiet", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_plot = sub.add_parser("plot", help="Export loss curves and metric series as CSV")
    p_plot.add_argument("--run-dir", required=True)
    p_plot.add_argument("--out-dir", default=None)
    p_plot.add_argument("--ledger", default=str(config.LEDGER_PATH))
    p_plot.set_defaults(func=cmd_plot)

    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args))
    except (JointCycleError, ValueError) as e:
        logger.error("%s failed: %s", args.cmd, e)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
