from __future__ import annotations

import logging
from contextlib import ExitStack, contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..diffusion import DenoiserNet
from ..losses import FeatureExtractor
from ..models import TrainConfig
from ..nn import Module
from ..translator import PatchDiscriminator, TranslatorNet
from .ema import EmaShadow
from .optim import Adam, AdamW

logger = logging.getLogger(__name__)

NETS = ("den_S", "den_T", "G", "F", "D_S", "D_T")
EMA_NETS = ("den_S", "den_T", "G", "F")


@dataclass
class TrainState:
    """Everything a training step reads or mutates. G maps S -> T, F maps T -> S."""

    cfg: TrainConfig
    den_S: DenoiserNet
    den_T: DenoiserNet
    G: TranslatorNet
    F: TranslatorNet
    D_S: PatchDiscriminator
    D_T: PatchDiscriminator
    extractor: FeatureExtractor
    opt_diffusion: AdamW
    opt_translator: Adam
    opt_disc: Adam
    ema: dict[str, EmaShadow] = field(default_factory=dict)
    iteration: int = 0
    last_report: dict | None = None

    def nets(self) -> dict[str, Module]:
        return {name: getattr(self, name) for name in NETS}

    def optimizers(self) -> dict[str, Adam]:
        return {"opt_diffusion": self.opt_diffusion, "opt_translator": self.opt_translator, "opt_disc": self.opt_disc}


def _seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def build_state(cfg: TrainConfig) -> TrainState:
    cfg.validate()
    s = _seeds(cfg.seed, len(NETS))
    den_cfg = cfg.denoiser()
    tr = cfg.translator()
    den_S = DenoiserNet(den_cfg, seed=s[0])
    den_T = DenoiserNet(den_cfg, seed=s[1])
    G = TranslatorNet(tr, channels=cfg.channels, seed=s[2])
    F = TranslatorNet(tr, channels=cfg.channels, seed=s[3])
    D_S = PatchDiscriminator(cfg.channels, n_out=cfg.dcl.n, seed=s[4])
    D_T = PatchDiscriminator(cfg.channels, n_out=cfg.dcl.n, seed=s[5])
    extractor = FeatureExtractor(cfg.channels, seed=cfg.perceptual_seed)

    state = TrainState(
        cfg=cfg,
        den_S=den_S,
        den_T=den_T,
        G=G,
        F=F,
        D_S=D_S,
        D_T=D_T,
        extractor=extractor,
        opt_diffusion=AdamW(
            den_S.parameters() + den_T.parameters(),
            lr=cfg.diffusion_lr_start,
            weight_decay=cfg.diffusion_weight_decay,
        ),
        opt_translator=Adam(G.parameters() + F.parameters(), lr=cfg.translator_lr, betas=(cfg.translator_beta1, 0.999)),
        opt_disc=Adam(D_S.parameters() + D_T.parameters(), lr=cfg.translator_lr, betas=(cfg.translator_beta1, 0.999)),
    )
    state.ema = {name: EmaShadow(getattr(state, name), cfg.ema_decay) for name in EMA_NETS}
    logger.info(
        "built nets: denoiser=%d translator=%d (%s %s) discriminator=%d params",
        den_S.num_parameters(),
        G.num_parameters(),
        tr.name,
        tr.depth,
        D_S.num_parameters(),
    )
    return state


@contextmanager
def frozen(*modules: Module) -> Iterator[None]:
    """Stop gradient recording into the modules' parameters for the duration."""
    params = [p for m in modules for p in m.parameters()]
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f


@contextmanager
def ema_weights(state: TrainState) -> Iterator[TrainState]:
    """Swap the EMA shadows into the tracked nets for sampling and evaluation."""
    with ExitStack() as stack:
        for name, shadow in state.ema.items():
            stack.enter_context(shadow.applied(getattr(state, name)))
        yield state
