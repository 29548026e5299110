from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator

import numpy as np

from ..errors import CheckpointError
from ..nn import Module


class EmaShadow:
    """Exponentially smoothed copy of a module's parameters."""

    def __init__(self, module: Module, decay: float = 0.999):
        if not 0.0 <= decay <= 1.0:
            raise ValueError("ema decay must lie in [0, 1]")
        self.decay = decay
        self.shadow: dict[str, np.ndarray] = {name: p.data.copy() for name, p in module.named_parameters()}

    def state_dict(self) -> dict[str, np.ndarray]:
        return dict(self.shadow)

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.shadow):
            raise CheckpointError("ema shadow keys do not match the tracked module")
        for k, v in state.items():
            if np.shape(v) != self.shadow[k].shape:
                raise CheckpointError(f"ema shadow {k}: shape {np.shape(v)} != {self.shadow[k].shape}")
        self.shadow = {k: np.asarray(v, dtype=self.shadow[k].dtype).copy() for k, v in state.items()}

    def copy_to(self, module: Module) -> None:
        module.load_state_dict(self.shadow)

    @contextmanager
    def applied(self, module: Module) -> Iterator[Module]:
        """Temporarily swap the shadow weights into `module`."""
        backup = {k: v.copy() for k, v in module.state_dict().items()}
        self.copy_to(module)
        try:
            yield module
        finally:
            module.load_state_dict(backup)


def ema_update(shadow: EmaShadow, params: Module | dict[str, np.ndarray]) -> EmaShadow:
    """shadow <- decay * shadow + (1 - decay) * param, elementwise."""
    current = params.state_dict() if isinstance(params, Module) else params
    if set(current) != set(shadow.shadow):
        raise ValueError("ema shadow and parameters are not aligned")
    d = shadow.decay
    for name, value in current.items():
        s = shadow.shadow[name]
        if d == 1.0:
            continue
        if d == 0.0:
            shadow.shadow[name] = np.array(value, dtype=s.dtype)
        else:
            shadow.shadow[name] = (d * s + (1.0 - d) * value).astype(s.dtype)
    return shadow
