"""Experiment configuration: one JSON document, unknown keys rejected."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError
from ..nn import ModelConfig
from ..regularizers import RegularizerSpec
from .data import SynthConfig


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # or "cifar"
    path: str | None = None  # CIFAR binary batch for training
    test_path: str | None = None  # CIFAR test batch; without it the tail of `path` is held out
    max_samples: int | None = 5000
    test_fraction: float = 0.2
    test_per_class: int = 100
    synth: SynthConfig = field(default_factory=SynthConfig)


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5e-4


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 20
    batch_size: int = 64
    probe_size: int = 64
    gaussian_sigma: float = 0.0
    augment: bool = False
    log_every: int = 1


@dataclass(frozen=True)
class PGDConfig:
    epsilon: float = 1.0
    steps: int = 7
    step_size: float | None = None
    n_samples: int = 64


@dataclass(frozen=True)
class HeatmapConfig:
    epsilon: float = 4.0
    n_samples: int = 100


@dataclass(frozen=True)
class EvalConfig:
    sensitivity_samples: int = 200
    filter_radii: tuple[float, ...] = (2.0, 3.0, 4.0, 6.0, 8.0)
    fourier_noise_eps: tuple[float, ...] = ()
    heatmap: HeatmapConfig | None = None
    patch_k: tuple[int, ...] = (1, 2, 4)
    pgd: PGDConfig | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out: str = "runs/experiment"

    def to_dict(self) -> dict:
        """Plain JSON-ready dict; nested seeds are omitted because the top-level seed replaces them."""
        d = _plain(asdict(self))
        d["model"].pop("seed", None)
        d["data"]["synth"].pop("seed", None)
        return d

    def config_hash(self) -> str:
        """sha256 of the canonical JSON of the fully resolved config."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=_seed(seed))

    @property
    def model_config(self) -> ModelConfig:
        return replace(self.model, seed=self.seed)

    @property
    def synth_config(self) -> SynthConfig:
        return replace(self.data.synth, seed=self.seed)

    def with_out(self, out) -> "ExperimentConfig":
        return replace(self, out=str(out))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def _seed(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {v!r}")
    return v


def _build(cls, raw, where: str, nested: dict | None = None):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    if "seed" in raw:
        raise ConfigError(f"{where}: seeds are set once, by the top-level 'seed'")
    kwargs = {}
    for key, value in raw.items():
        if nested and key in nested:
            sub_cls = nested[key]
            kwargs[key] = _build(sub_cls, value, f"{where}.{key}", _NESTED.get(sub_cls))
        elif isinstance(value, list):
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    DataConfig: {"synth": SynthConfig},
    EvalConfig: {"heatmap": HeatmapConfig, "pgd": PGDConfig},
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "seed" not in raw:
        raise ConfigError("config must set 'seed' (no wall-clock seeding)")
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}")
    sections = {
        "model": ModelConfig,
        "data": DataConfig,
        "regularizer": RegularizerSpec,
        "optim": OptimConfig,
        "train": TrainSection,
        "eval": EvalConfig,
    }
    kwargs = {"seed": _seed(raw["seed"])}
    for key, cls in sections.items():
        if key in raw:
            built = _build(cls, raw[key], key, _NESTED.get(cls))
            if built is None:
                raise ConfigError(f"{key} may not be null")
            kwargs[key] = built
    if "out" in raw:
        if not isinstance(raw["out"], str):
            raise ConfigError("out must be a path string")
        kwargs["out"] = raw["out"]
    cfg = ExperimentConfig(**kwargs)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    """Cross-field checks shared by JSON loading and programmatic configs."""
    _seed(cfg.seed)
    if cfg.data.source not in ("synthetic", "cifar"):
        raise ConfigError(f"unknown data source {cfg.data.source!r}")
    if cfg.data.source == "synthetic":
        s = cfg.data.synth
        if (s.n, s.classes, s.channels) != (cfg.model.n, cfg.model.classes, cfg.model.channels):
            raise ConfigError("model (n, classes, channels) must match the synthetic dataset")
    else:
        if cfg.data.path is None:
            raise ConfigError("cifar source needs data.path")
        if (cfg.model.n, cfg.model.classes, cfg.model.channels) != (32, 10, 3):
            raise ConfigError("cifar models take 3x32x32 inputs and 10 classes")
    if cfg.regularizer.n != cfg.model.n:
        raise ConfigError("regularizer.n must equal model.n")
    if cfg.train.epochs < 0 or cfg.train.batch_size < 1:
        raise ConfigError("epochs must be >= 0 and batch_size >= 1")
    if any(r < 0 for r in cfg.eval.filter_radii):
        raise ConfigError("filter radii must be non-negative")
    if any(k < 1 or cfg.model.n % k for k in cfg.eval.patch_k):
        raise ConfigError(f"every patch k must divide n={cfg.model.n}")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw)
