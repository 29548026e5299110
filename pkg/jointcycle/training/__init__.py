from .checkpoint import load_checkpoint, save_checkpoint
from .ema import EmaShadow, ema_update
from .loop import train_run
from .optim import Adam, AdamW, clip_grad_norm
from .schedule import lr_at
from .state import TrainState, build_state, ema_weights, frozen
from .step import LOSS_COLUMNS, train_step

__all__ = [
    "Adam",
    "AdamW",
    "EmaShadow",
    "LOSS_COLUMNS",
    "TrainState",
    "build_state",
    "clip_grad_norm",
    "ema_update",
    "ema_weights",
    "frozen",
    "load_checkpoint",
    "lr_at",
    "save_checkpoint",
    "train_run",
    "train_step",
]
