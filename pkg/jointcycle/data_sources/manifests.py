"""Unpaired training manifests and the paired evaluation manifest.

Manifest files are line-oriented text:

    # key=value header lines (domain, task, seed, for_training)
    <relative path> <spec seed> <domain> [<pair id>]
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import config
from ..errors import ManifestError
from ..io import images
from ..io.artifacts import atomic_write_text, parse_kv
from ..models import DatasetManifest, ManifestEntry, TASKS
from .shapes import TASK_DOMAINS, render, spec_for_seed

logger = logging.getLogger(__name__)

STREAM_SPAN = 1_000_000
IMAGE_SUFFIXES = (".pgm", ".png", ".raw")


def stream_seeds(seed: int, stream: int, n: int) -> list[int]:
    """`n` spec seeds for one stream; streams of one base seed never overlap."""
    if not 0 <= n < STREAM_SPAN:
        raise ValueError(f"n must lie in [0, {STREAM_SPAN})")
    base = seed * 10 * STREAM_SPAN + stream
    return [base + i for i in range(n)]


def manifest_path(data_dir: Path, task: str, split: str) -> Path:
    return Path(data_dir) / task / f"manifest_{split}.txt"


def write_manifest(path: Path, manifest: DatasetManifest) -> None:
    manifest.validate()
    lines = [
        f"# domain={manifest.domain}",
        f"# task={manifest.task}",
        f"# seed={manifest.seed}",
        f"# for_training={int(manifest.for_training)}",
    ]
    for e in manifest.entries:
        line = f"{e.path} {e.seed} {e.domain}"
        if e.pair_id is not None:
            line += f" {e.pair_id}"
        lines.append(line)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    header: dict[str, str] = {}
    entries: list[ManifestEntry] = []
    for n, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            header.update(parse_kv(line[1:], source=f"{path}:{n}"))
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ManifestError(f"{path}:{n}: expected 'path seed domain [pair_id]'")
        try:
            entries.append(
                ManifestEntry(
                    path=parts[0],
                    seed=int(parts[1]),
                    domain=parts[2],
                    pair_id=int(parts[3]) if len(parts) == 4 else None,
                )
            )
        except ValueError:
            raise ManifestError(f"{path}:{n}: malformed entry {line!r}") from None
    try:
        m = DatasetManifest(
            domain=header["domain"],
            task=header["task"],
            seed=int(header["seed"]),
            entries=tuple(entries),
            for_training=header.get("for_training", "1") == "1",
        )
        m.validate()
    except (KeyError, ValueError) as e:
        raise ManifestError(f"{path}: bad manifest header ({e})") from None
    return m


def _write_image(path: Path, img: np.ndarray) -> None:
    if path.suffix == ".raw":
        images.save_raw(path, img)
    else:
        images.save_image(path, img)


def _render_all(out_dir: Path, jobs: list[tuple[str, int, str]], size: int, threads: int) -> None:
    def one(job: tuple[str, int, str]) -> None:
        rel, seed, kind = job
        _write_image(out_dir / rel, render(kind, spec_for_seed(seed), size))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, jobs))
    else:
        for job in jobs:
            one(job)


def make_unpaired_split(
    n_S: int,
    n_T: int,
    seed: int,
    task: str = "solids-edges",
    data_dir: Path = config.DATA_DIR,
    size: int = config.IMAGE_SIZE,
    fmt: str = ".pgm",
    threads: int = 1,
) -> tuple[DatasetManifest, DatasetManifest]:
    """Render S from one seed stream and T from a disjoint one; write both manifests."""
    if task not in TASKS:
        raise ValueError(f"task must be one of {', '.join(TASKS)}")
    if fmt not in IMAGE_SUFFIXES:
        raise ValueError(f"fmt must be one of {', '.join(IMAGE_SUFFIXES)}")
    kind_S, kind_T = TASK_DOMAINS[task]
    root = Path(data_dir) / task
    out: list[DatasetManifest] = []
    for split, kind, stream, n in (("S", kind_S, config.SEED_STREAM_S, n_S), ("T", kind_T, config.SEED_STREAM_T, n_T)):
        seeds = stream_seeds(seed, stream, n)
        jobs = [(f"train_{split}/{s}{fmt}", s, kind) for s in seeds]
        _render_all(root, jobs, size, threads)
        entries = tuple(ManifestEntry(path=rel, seed=s, domain=split) for rel, s, _ in jobs)
        m = DatasetManifest(domain=split, task=task, seed=seed, entries=entries, for_training=True)
        write_manifest(manifest_path(data_dir, task, split), m)
        out.append(m)
    if out[0].seeds & out[1].seeds:
        raise ManifestError("S and T training manifests share spec seeds")
    logger.info("wrote %d S and %d T training images under %s", n_S, n_T, root)
    return out[0], out[1]


def make_paired_eval(
    n: int,
    seed: int,
    task: str = "solids-edges",
    data_dir: Path = config.DATA_DIR,
    size: int = config.IMAGE_SIZE,
    fmt: str = ".pgm",
    threads: int = 1,
) -> DatasetManifest:
    """Render each eval spec in both domains; the manifest is flagged never-for-training."""
    if task not in TASKS:
        raise ValueError(f"task must be one of {', '.join(TASKS)}")
    kind_S, kind_T = TASK_DOMAINS[task]
    root = Path(data_dir) / task
    seeds = stream_seeds(seed, config.SEED_STREAM_EVAL, n)
    jobs: list[tuple[str, int, str]] = []
    entries: list[ManifestEntry] = []
    for i, s in enumerate(seeds):
        for split, kind in (("S", kind_S), ("T", kind_T)):
            rel = f"eval/{i:04d}_{split}{fmt}"
            jobs.append((rel, s, kind))
            entries.append(ManifestEntry(path=rel, seed=s, domain=split, pair_id=i))
    _render_all(root, jobs, size, threads)
    m = DatasetManifest(domain="pair", task=task, seed=seed, entries=tuple(entries), for_training=False)
    write_manifest(manifest_path(data_dir, task, "eval"), m)
    logger.info("wrote %d eval pairs under %s", n, root)
    return m


def load_entries(manifest_file: Path, entries: tuple[ManifestEntry, ...], channels: int = 1) -> np.ndarray:
    """Stack the images of `entries` (paths relative to the manifest) into (N, C, H, W) float32."""
    base = Path(manifest_file).parent
    arrays = []
    for e in entries:
        p = base / e.path
        if not p.exists():
            raise ManifestError(f"missing image {p}")
        arrays.append(images.load_raw(p) if p.suffix == ".raw" else images.load_image(p, channels))
    if not arrays:
        raise ManifestError(f"{manifest_file}: no images")
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ManifestError(f"{manifest_file}: mixed image shapes {sorted(shapes)}")
    return np.stack(arrays).astype(np.float32)


def load_domain(manifest_file: Path, channels: int = 1) -> np.ndarray:
    m = read_manifest(manifest_file)
    return load_entries(manifest_file, m.entries, channels)


def load_pairs(manifest_file: Path, channels: int = 1) -> tuple[np.ndarray, np.ndarray, DatasetManifest]:
    """(sources, targets, manifest) of a paired eval manifest, ordered by pair id."""
    m = read_manifest(manifest_file)
    if m.for_training:
        raise ManifestError(f"{manifest_file} is a training manifest, not a paired eval set")
    by_pair: dict[int, dict[str, ManifestEntry]] = {}
    for e in m.entries:
        if e.pair_id is None:
            raise ManifestError(f"{manifest_file}: eval entry {e.path} has no pair id")
        by_pair.setdefault(e.pair_id, {})[e.domain] = e
    ids = sorted(by_pair)
    if any(set(by_pair[i]) != {"S", "T"} for i in ids):
        raise ManifestError(f"{manifest_file}: every pair needs one S and one T entry")
    src = load_entries(manifest_file, tuple(by_pair[i]["S"] for i in ids), channels)
    tgt = load_entries(manifest_file, tuple(by_pair[i]["T"] for i in ids), channels)
    return src, tgt, m
