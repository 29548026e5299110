from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

from . import config


def _require_int(name: str, v: Any, lo: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"{name} must be an int")
    if lo is not None and v < lo:
        raise ValueError(f"{name} must be >= {lo}")
    return v


def _require_float(name: str, v: Any, lo: float | None = None, hi: float | None = None) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValueError(f"{name} must be a finite number")
    if lo is not None and v < lo:
        raise ValueError(f"{name} must be >= {lo}")
    if hi is not None and v > hi:
        raise ValueError(f"{name} must be <= {hi}")
    return float(v)


def _require_choice(name: str, v: Any, choices: tuple[str, ...]) -> str:
    if v not in choices:
        raise ValueError(f"{name} must be one of {', '.join(choices)} (got {v!r})")
    return v


def _parse_bool(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in {"1", "true", "yes", "on"}:
        return True
    if s in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_list(v: Any) -> tuple[str, ...]:
    if isinstance(v, (list, tuple)):
        return tuple(str(x) for x in v)
    s = str(v).strip()
    return tuple(x.strip() for x in s.split(",") if x.strip()) if s else ()


@dataclass(frozen=True)
class LossWeights:
    dm: float = config.DEFAULT_LAMBDAS[0]
    adv: float = config.DEFAULT_LAMBDAS[1]
    cyc: float = config.DEFAULT_LAMBDAS[2]
    idt: float = config.DEFAULT_LAMBDAS[3]
    lps: float = config.DEFAULT_LAMBDAS[4]
    dcl: float = config.DEFAULT_LAMBDAS[5]

    TERMS = ("dm", "adv", "cyc", "idt", "lps", "dcl")

    def validate(self) -> None:
        for k in self.TERMS:
            _require_float(f"lambda_{k}", getattr(self, k), lo=0.0)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in self.TERMS)

    def scaled(self, k: float) -> "LossWeights":
        return LossWeights(*(w * k for w in self.as_tuple()))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "LossWeights":
        w = LossWeights(**{k: float(d[k]) for k in LossWeights.TERMS if k in d})
        w.validate()
        return w


@dataclass(frozen=True)
class DCLConfig:
    n: int = config.DCL_DIM
    tau: float = config.DCL_TEMPERATURE
    # "pixel": one N-vector per patch position; "column": (N*h)-vectors per patch column.
    reshape: str = "pixel"

    def validate(self) -> None:
        _require_int("dcl_n", self.n, lo=2)
        _require_float("dcl_tau", self.tau)
        if self.tau <= 0:
            raise ValueError("dcl_tau must be > 0")
        _require_choice("dcl_reshape", self.reshape, ("pixel", "column"))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


TRANSLATOR_DEPTHS: dict[str, tuple[int, int, int]] = {
    "desk": (2, 6, 2),
    "resnet6": (3, 6, 3),
    "resnet9": (3, 9, 3),
    "resnet12": (3, 12, 3),
    "full": (3, 12, 3),
}


@dataclass(frozen=True)
class TranslatorPreset:
    name: str = "desk"
    n_down: int = 2
    n_res: int = 6
    n_up: int = 2
    base_width: int = 16
    time_dim: int = config.TIME_EMBED_DIM
    heads: int = config.ATTENTION_HEADS
    time_conditioned: bool = True
    attention: bool = True

    def validate(self) -> None:
        _require_int("n_down", self.n_down, lo=0)
        _require_int("n_res", self.n_res, lo=0)
        _require_int("n_up", self.n_up, lo=0)
        if self.n_down != self.n_up:
            raise ValueError("n_down must equal n_up")
        _require_int("base_width", self.base_width, lo=1)
        _require_int("time_dim", self.time_dim, lo=2)
        if self.time_dim % 2:
            raise ValueError("time_dim must be even")
        _require_int("heads", self.heads, lo=1)
        if self.base_width % self.heads:
            raise ValueError("base_width must be divisible by heads")

    @property
    def depth(self) -> tuple[int, int, int]:
        return (self.n_down, self.n_res, self.n_up)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @staticmethod
    def named(name: str, **overrides: Any) -> "TranslatorPreset":
        if name not in TRANSLATOR_DEPTHS:
            raise ValueError(f"unknown translator preset {name!r}")
        d, r, u = TRANSLATOR_DEPTHS[name]
        p = TranslatorPreset(name=name, n_down=d, n_res=r, n_up=u, **overrides)
        p.validate()
        return p


@dataclass(frozen=True)
class DenoiserConfig:
    channels: int = config.IMAGE_CHANNELS
    image_size: int = config.IMAGE_SIZE
    base_width: int = 32
    levels: int = 2
    time_dim: int = config.TIME_EMBED_DIM

    def validate(self) -> None:
        _require_int("channels", self.channels, lo=1)
        _require_int("image_size", self.image_size, lo=4)
        _require_int("denoiser_width", self.base_width, lo=1)
        _require_int("denoiser_levels", self.levels, lo=1)
        if self.image_size % (2 ** (self.levels - 1)):
            raise ValueError("image_size must be divisible by 2**(levels-1)")
        _require_int("time_dim", self.time_dim, lo=2)
        if self.time_dim % 2:
            raise ValueError("time_dim must be even")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.image_size, self.image_size)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


ABLATIONS = ("no-joint", "no-time", "no-attn", "no-dcl", "no-lps", "no-component")
TASKS = ("solids-edges", "bright-dark")


@dataclass(frozen=True)
class TrainConfig:
    preset: str = "desk"
    task: str = "solids-edges"
    total_iters: int = 6000
    warmup_iters: int = 2000
    batch_size: int = 8
    image_size: int = config.IMAGE_SIZE
    channels: int = config.IMAGE_CHANNELS
    diffusion_lr_start: float = 1e-4
    diffusion_lr_end: float = 1e-5
    diffusion_weight_decay: float = 1e-2
    translator_lr: float = 2e-4
    translator_beta1: float = 0.5
    ema_decay: float = 0.999
    grad_clip: float = 1.0
    seed: int = config.DEFAULT_SEED
    threads: int = config.DEFAULT_THREADS
    translator_preset: str = "desk"
    denoiser_width: int = 32
    weights: LossWeights = field(default_factory=LossWeights)
    dcl: DCLConfig = field(default_factory=DCLConfig)
    ablations: tuple[str, ...] = ()
    data_dir: str = str(config.DATA_DIR)
    checkpoint_every: int = 500
    sample_every: int = 500
    log_every: int = 50
    perceptual_seed: int = 1234

    def validate(self) -> None:
        _require_choice("preset", self.preset, ("desk", "full"))
        _require_choice("task", self.task, TASKS)
        _require_int("total_iters", self.total_iters, lo=1)
        _require_int("warmup_iters", self.warmup_iters, lo=0)
        if self.warmup_iters > self.total_iters:
            raise ValueError("warmup_iters must be <= total_iters")
        _require_int("batch_size", self.batch_size, lo=2)
        _require_int("image_size", self.image_size, lo=16)
        _require_int("channels", self.channels, lo=1)
        _require_float("diffusion_lr_start", self.diffusion_lr_start, lo=0.0)
        _require_float("diffusion_lr_end", self.diffusion_lr_end, lo=0.0)
        _require_float("diffusion_weight_decay", self.diffusion_weight_decay, lo=0.0)
        _require_float("translator_lr", self.translator_lr, lo=0.0)
        _require_float("translator_beta1", self.translator_beta1, lo=0.0, hi=1.0)
        _require_float("ema_decay", self.ema_decay, lo=0.0, hi=1.0)
        _require_float("grad_clip", self.grad_clip, lo=0.0)
        _require_int("seed", self.seed, lo=0)
        _require_int("threads", self.threads, lo=1)
        if self.translator_preset not in TRANSLATOR_DEPTHS:
            raise ValueError(f"translator_preset must be one of {', '.join(TRANSLATOR_DEPTHS)}")
        _require_int("denoiser_width", self.denoiser_width, lo=8)
        self.weights.validate()
        self.dcl.validate()
        for a in self.ablations:
            _require_choice("ablate", a, ABLATIONS)
        for k in ("checkpoint_every", "sample_every", "log_every"):
            _require_int(k, getattr(self, k), lo=1)

    def ablated(self, name: str) -> bool:
        return name in self.ablations

    @property
    def diffusion_iters(self) -> int:
        """Leading steps that train only the denoisers.

        Without joint training the denoisers take the joint arm's whole diffusion budget
        (total_iters updates) before any translator step.
        """
        return self.total_iters if self.ablated("no-joint") else self.warmup_iters

    @property
    def run_iters(self) -> int:
        """Steps in the run; under no-joint the translators still get total_iters - warmup_iters."""
        if self.ablated("no-joint"):
            return self.total_iters + (self.total_iters - self.warmup_iters)
        return self.total_iters

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.image_size, self.image_size)

    def effective_weights(self) -> LossWeights:
        w = self.weights
        if self.ablated("no-dcl"):
            w = replace(w, dcl=0.0)
        if self.ablated("no-lps"):
            w = replace(w, lps=0.0)
        return w

    def translator(self) -> TranslatorPreset:
        return TranslatorPreset.named(
            self.translator_preset,
            time_conditioned=not self.ablated("no-time"),
            attention=not (self.ablated("no-attn") or self.ablated("no-time")),
        )

    def denoiser(self) -> DenoiserConfig:
        return DenoiserConfig(channels=self.channels, image_size=self.image_size, base_width=self.denoiser_width)

    def to_flat(self) -> dict[str, str]:
        """Flat key=value view; nested records are prefixed (lambda_*, dcl_*)."""
        out: dict[str, str] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "weights":
                for k in LossWeights.TERMS:
                    out[f"lambda_{k}"] = repr(getattr(v, k))
            elif f.name == "dcl":
                out["dcl_n"] = str(v.n)
                out["dcl_tau"] = repr(v.tau)
                out["dcl_reshape"] = v.reshape
            elif f.name == "ablations":
                out["ablate"] = ",".join(v)
            elif isinstance(v, float):
                out[f.name] = repr(v)
            else:
                out[f.name] = str(v)
        return out

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_flat(d: dict[str, Any], base: "TrainConfig | None" = None) -> "TrainConfig":
        """Build from a flat mapping of strings; unknown keys are rejected."""
        base = base or TrainConfig()
        kw: dict[str, Any] = {}
        weights = base.weights.to_dict()
        dcl = base.dcl.to_dict()
        types = {f.name: type(getattr(base, f.name)) for f in fields(base)}
        for key, raw in d.items():
            if key.startswith("lambda_") and key[7:] in LossWeights.TERMS:
                weights[key[7:]] = float(raw)
            elif key == "dcl_n":
                dcl["n"] = int(raw)
            elif key == "dcl_tau":
                dcl["tau"] = float(raw)
            elif key == "dcl_reshape":
                dcl["reshape"] = str(raw)
            elif key == "ablate":
                kw["ablations"] = _parse_list(raw)
            elif key in types and key not in {"weights", "dcl", "ablations"}:
                t = types[key]
                if t is bool:
                    kw[key] = _parse_bool(raw)
                elif t is int:
                    kw[key] = int(raw)
                elif t is float:
                    kw[key] = float(raw)
                else:
                    kw[key] = str(raw)
            else:
                raise ValueError(f"unknown config key {key!r}")
        cfg = replace(base, weights=LossWeights(**weights), dcl=DCLConfig(**dcl), **kw)
        cfg.validate()
        return cfg

    @staticmethod
    def preset_named(name: str) -> "TrainConfig":
        if name == "desk":
            cfg = TrainConfig()
        elif name == "full":
            cfg = TrainConfig(
                preset="full",
                total_iters=100_000,
                warmup_iters=50_000,
                batch_size=24,
                translator_preset="full",
                checkpoint_every=5000,
                sample_every=5000,
                log_every=100,
            )
        else:
            raise ValueError(f"unknown preset {name!r}")
        cfg.validate()
        return cfg


SAMPLER_MODES = {"rgb-rgb": config.STEPS_SAME_MODALITY, "cross-modality": config.STEPS_CROSS_MODALITY}
TASK_MODES = {"solids-edges": "cross-modality", "bright-dark": "rgb-rgb"}


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = config.STEPS_CROSS_MODALITY
    mode: str = "cross-modality"
    seed: int = config.DEFAULT_SEED

    def validate(self) -> None:
        _require_int("steps", self.steps, lo=1)
        _require_choice("mode", self.mode, tuple(SAMPLER_MODES))
        _require_int("seed", self.seed, lo=0)

    @property
    def step_size(self) -> float:
        return 1.0 / self.steps

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @staticmethod
    def for_mode(mode: str, steps: int | None = None, seed: int = config.DEFAULT_SEED) -> "SamplerConfig":
        _require_choice("mode", mode, tuple(SAMPLER_MODES))
        sc = SamplerConfig(steps=steps if steps is not None else SAMPLER_MODES[mode], mode=mode, seed=seed)
        sc.validate()
        return sc


SHAPE_KINDS = ("ellipse", "rectangle", "triangle")


@dataclass(frozen=True)
class ShapeSpec:
    """A filled primitive on a square canvas; geometry is in canvas fractions, intensities in [-1, 1]."""

    kind: str
    cx: float
    cy: float
    half_w: float
    half_h: float
    rotation: float
    intensity: float
    background: float

    def validate(self) -> None:
        _require_choice("kind", self.kind, SHAPE_KINDS)
        for name in ("cx", "cy", "half_w", "half_h"):
            _require_float(name, getattr(self, name), lo=0.0, hi=1.0)
        _require_float("rotation", self.rotation)
        _require_float("intensity", self.intensity, lo=-1.0, hi=1.0)
        _require_float("background", self.background, lo=-1.0, hi=1.0)
        if abs(self.intensity - self.background) < 0.3:
            raise ValueError("intensity contrast must be >= 0.3")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "ShapeSpec":
        s = ShapeSpec(
            kind=str(d["kind"]),
            **{k: float(d[k]) for k in ("cx", "cy", "half_w", "half_h", "rotation", "intensity", "background")},
        )
        s.validate()
        return s


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    seed: int
    domain: str
    pair_id: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class DatasetManifest:
    domain: str
    task: str
    seed: int
    entries: tuple[ManifestEntry, ...]
    for_training: bool = True

    @property
    def count(self) -> int:
        return len(self.entries)

    @property
    def seeds(self) -> set[int]:
        return {e.seed for e in self.entries}

    def validate(self) -> None:
        if not self.domain:
            raise ValueError("domain must be non-empty")
        _require_choice("task", self.task, TASKS)
        for e in self.entries:
            if not e.path:
                raise ValueError("manifest entry path must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["entries"] = [e.to_dict() for e in self.entries]
        return d


@dataclass(frozen=True)
class EvalReport:
    ssim: float
    mmd: float
    cycle_l1: float
    edge_f1: float | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        _require_float("ssim", self.ssim, lo=-1.0 - 1e-9, hi=1.0 + 1e-9)
        _require_float("mmd", self.mmd, lo=-1e-6)
        _require_float("cycle_l1", self.cycle_l1, lo=0.0)
        if self.edge_f1 is not None:
            _require_float("edge_f1", self.edge_f1, lo=0.0, hi=1.0)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RunConfig:
    """Merged configuration of one command invocation plus where its outputs go."""

    values: dict[str, str]
    run_dir: str
    sources: dict[str, str] = field(default_factory=dict)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.values.get(key, default)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
