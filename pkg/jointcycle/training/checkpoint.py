from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..io import container
from ..models import TrainConfig
from .state import TrainState, build_state

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"


def state_tensors(state: TrainState) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for name, net in state.nets().items():
        for k, v in net.state_dict().items():
            out[f"{name}.{k}"] = v
    for name, opt in state.optimizers().items():
        for k, v in opt.state_dict().items():
            out[f"{name}.{k}"] = v
    for name, shadow in state.ema.items():
        for k, v in shadow.state_dict().items():
            out[f"ema.{name}.{k}"] = v
    return out


def _strip(prefix: str, tensors: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k[len(prefix) :]: v for k, v in tensors.items() if k.startswith(prefix)}


def save_checkpoint(path: Path, state: TrainState) -> None:
    cfg = state.cfg
    meta = {
        "format": FORMAT_VERSION,
        "iteration": str(state.iteration),
        "image_shape": ",".join(str(d) for d in cfg.image_shape),
        "channels": str(cfg.channels),
        "normalization": "[-1,1]",
        "translator": f"{cfg.translator().name}:{','.join(str(d) for d in cfg.translator().depth)}",
    }
    for k, v in cfg.to_flat().items():
        meta[f"cfg.{k}"] = v
    container.save(path, state_tensors(state), meta)
    logger.info("checkpoint written: %s (iteration %d)", path, state.iteration)


def config_from_meta(meta: dict[str, str]) -> TrainConfig:
    flat = {k[4:]: v for k, v in meta.items() if k.startswith("cfg.")}
    if not flat:
        raise CheckpointError("checkpoint carries no training config")
    try:
        return TrainConfig.from_flat(flat)
    except ValueError as e:
        raise CheckpointError(f"checkpoint config is invalid: {e}") from None


def load_checkpoint(path: Path, cfg: TrainConfig | None = None) -> TrainState:
    """Rebuild a TrainState; `cfg` overrides the stored config (shapes must still match)."""
    tensors, meta = container.load(path)
    if meta.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
    cfg = cfg or config_from_meta(meta)
    state = build_state(cfg)
    for name, net in state.nets().items():
        net.load_state_dict(_strip(f"{name}.", tensors))
    for name, opt in state.optimizers().items():
        opt.load_state_dict(_strip(f"{name}.", tensors))
    for name, shadow in state.ema.items():
        shadow.load_state_dict(_strip(f"ema.{name}.", tensors))
    state.iteration = int(meta.get("iteration", "0"))
    logger.info("resumed from %s at iteration %d", path, state.iteration)
    return state
