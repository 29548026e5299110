from __future__ import annotations

from pathlib import Path

BASE_DIR = Path(__file__).resolve().parents[1]

STATE_DIR = BASE_DIR / "state"
DATA_DIR = STATE_DIR / "data"
RUNS_DIR = STATE_DIR / "runs"
LEDGER_PATH = RUNS_DIR / "ledger.csv"

ENV_SEED = "JOINTCYCLE_SEED"
ENV_THREADS = "JOINTCYCLE_THREADS"
ENV_SLOW_TESTS = "JOINTCYCLE_SLOW"

# Loss weights (diffusion, adversarial, cycle, identity, perceptual, contrastive).
DEFAULT_LAMBDAS = (5e-2, 1.0, 10.0, 5.0, 0.5, 0.02)

DCL_DIM = 7
DCL_TEMPERATURE = 0.1

STEPS_SAME_MODALITY = 100
STEPS_CROSS_MODALITY = 200

IMAGE_SIZE = 32
IMAGE_CHANNELS = 1

GROUP_NORM_GROUPS = 8
ATTENTION_HEADS = 4
TIME_EMBED_DIM = 64

DEFAULT_SEED = 0
DEFAULT_THREADS = 1

EVAL_PAIRS = 200

# Seed stream offsets; S, T and eval draws never share a spec seed.
SEED_STREAM_S = 1_000_003
SEED_STREAM_T = 2_000_003
SEED_STREAM_EVAL = 3_000_017
