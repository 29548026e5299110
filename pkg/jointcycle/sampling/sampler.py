"""Two-phase translation sampler.

Encoding walks t = s, 2s, ..., 1 over the source image: the clean input is re-noised with the
previous prediction (x_t = x0 + t*C + t*eps), denoised by the source net, and the predicted
component is translated and stored. Generation starts from noise at t = 1 and walks back
down, taking each step with the target net's noise estimate and the stored translated
component: x <- x - s*(C + eps). That is the Euler step of dx/dt = C + eps, which is exact
along the straight path of the forward process. Derivation: docs/sampler.md.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from tqdm import tqdm

from ..autodiff import Tensor, no_grad
from ..diffusion import denoise
from ..errors import NonFiniteError, TraceError
from ..models import SamplerConfig
from ..nn import Module
from ..translator import translate

logger = logging.getLogger(__name__)

# "component" substitutes the translated component; "state" (no-component ablation) substitutes the translated state.
SUBSTITUTIONS = ("component", "state")

CHUNK_SIZE = 25


@dataclass
class SampleTrace:
    """Translated components in ascending time; entry k belongs to t = (k+1)/steps."""

    steps: int
    entries: list[np.ndarray] = field(default_factory=list)
    substitution: str = "component"

    def time_of(self, k: int) -> float:
        return (k + 1) / self.steps

    def push(self, value: np.ndarray) -> None:
        if len(self.entries) >= self.steps:
            raise TraceError(f"trace already holds {self.steps} entries")
        self.entries.append(value)

    def pop(self, t: float) -> np.ndarray:
        """Take the newest entry; it must belong to time `t`."""
        if not self.entries:
            raise TraceError("trace exhausted")
        k = len(self.entries) - 1
        if abs(self.time_of(k) - t) > 1e-9:
            raise TraceError(f"trace entry {k} belongs to t={self.time_of(k)}, requested t={t}")
        return self.entries.pop()

    def __len__(self) -> int:
        return len(self.entries)


def _batched(x: Any) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    return arr[None] if arr.ndim == 3 else arr


def _check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} is not finite")
    return arr


def encode_components(
    x0_S: Any,
    netS: Module,
    G: Module,
    cfg: SamplerConfig,
    substitution: str = "component",
    progress: bool = False,
) -> SampleTrace:
    if substitution not in SUBSTITUTIONS:
        raise ValueError(f"substitution must be one of {', '.join(SUBSTITUTIONS)}")
    x0 = _batched(x0_S)
    n = cfg.steps
    trace = SampleTrace(steps=n, substitution=substitution)
    with no_grad():
        pred = denoise(netS, Tensor(x0), 0.0)
        C, eps = pred.C.data, pred.eps.data
        for k in tqdm(range(1, n + 1), desc="encode", disable=not progress, leave=False):
            t = k / n
            z = (x0 + np.float32(t) * C + np.float32(t) * eps).astype(np.float32)
            pred = denoise(netS, Tensor(z), t)
            C, eps = pred.C.data, pred.eps.data
            src = C if substitution == "component" else z
            trace.push(_check_finite(f"translated input at t={t}", translate(G, Tensor(src), t).data))
    return trace


def generate(
    trace: SampleTrace,
    netT: Module,
    cfg: SamplerConfig,
    x_start: Any = None,
    progress: bool = False,
    on_step: Callable[[float, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Reverse from t = 1 to 0, consuming the trace newest-first. Returns (B, C, H, W)."""
    if len(trace) != cfg.steps or trace.steps != cfg.steps:
        raise TraceError(f"trace holds {len(trace)} entries for {trace.steps} steps; sampler wants {cfg.steps}")
    n = cfg.steps
    s = np.float32(1.0 / n)
    shape = trace.entries[-1].shape
    if x_start is None:
        x = np.random.default_rng(cfg.seed).standard_normal(shape).astype(np.float32)
    else:
        x = np.broadcast_to(np.asarray(x_start, dtype=np.float32), shape).copy()
    with no_grad():
        for k in tqdm(range(n, 0, -1), desc="generate", disable=not progress, leave=False):
            t = k / n
            sub = trace.pop(t)
            if trace.substitution == "state":
                x = sub
            pred = denoise(netT, Tensor(x), t)
            C = sub if trace.substitution == "component" else pred.C.data
            x = _check_finite(f"state at t={t}", (x - s * (C + pred.eps.data)).astype(np.float32))
            if on_step is not None:
                on_step((k - 1) / n, x)
    return x


def translate_image(
    x0_S: Any,
    netS: Module,
    G: Module,
    netT: Module,
    cfg: SamplerConfig,
    substitution: str = "component",
    x_start: Any = None,
    progress: bool = False,
) -> np.ndarray:
    """Encode with the source net and translator, generate with the target net; keeps the input's rank."""
    single = np.ndim(x0_S.data if isinstance(x0_S, Tensor) else x0_S) == 3
    trace = encode_components(x0_S, netS, G, cfg, substitution=substitution, progress=progress)
    out = generate(trace, netT, cfg, x_start=x_start, progress=progress)
    logger.debug("translated batch of %d with %d steps", out.shape[0], cfg.steps)
    return out[0] if single else out


def translate_set(
    sources: np.ndarray,
    netS: Module,
    G: Module,
    netT: Module,
    sc: SamplerConfig,
    substitution: str = "component",
    chunk: int = CHUNK_SIZE,
    threads: int = 1,
    progress: bool = False,
) -> np.ndarray:
    """Translate a stack in fixed chunks fanned out over `threads` workers.

    Chunk k samples with seed sc.seed + k, so the output does not depend on the thread count.
    """
    if threads < 1:
        raise ValueError(f"threads must be >= 1 (got {threads})")
    starts = list(range(0, len(sources), chunk))

    def one(k: int) -> np.ndarray:
        part = sources[starts[k] : starts[k] + chunk]
        csc = SamplerConfig(steps=sc.steps, mode=sc.mode, seed=sc.seed + k)
        return translate_image(part, netS, G, netT, csc, substitution=substitution)

    workers = min(threads, len(starts))
    logger.debug("translating %d images in %d chunks on %d threads", len(sources), len(starts), workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(tqdm(pool.map(one, range(len(starts))), total=len(starts), desc="translate", disable=not progress))
    else:
        parts = [one(k) for k in tqdm(range(len(starts)), desc="translate", disable=not progress)]
    return np.concatenate(parts).astype(np.float32)
