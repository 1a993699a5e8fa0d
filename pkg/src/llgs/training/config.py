"""Run configuration: frozen dataclasses with validated defaults and a TOML loader."""

from __future__ import annotations

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping

from ..errors import ConfigError
from ..llgim import PruneConfig
from ..losses import LossWeights
from ..optim.adam import exponential_lr
from ..scene.model import (
    GROUP_COVARIANCE,
    GROUP_DECOMPOSITION,
    GROUP_EMBEDDING,
    GROUP_FEATURE,
    GROUP_OFFSET_INTRINSIC,
    GROUP_OFFSET_TRANSIENT,
    GROUP_OPACITY,
    GROUP_TONE_MAP,
    ModelConfig,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class TrainConfig:
    """
    Optimisation hyperparameters.

    The residual weight decays linearly from ``lambda_re_start`` to ``lambda_re_end`` over
    ``schedule_switch`` iterations; the enhancement weight is 0 before ``schedule_switch`` and
    ``lambda_enh`` from then on. The tone-mapping decoder is frozen while its weight is 0.

    ``transient = False`` trains without the residual branch and ``weighted_l1 = False``
    reconstructs with a plain L1 term; both exist for ablation runs.
    """

    iterations: int = 8000
    warmup_iters: int = 500
    warmup_lr: float = 1e-3
    seed: int = 0
    views_per_step: int = 1
    gamma: float = 4.0

    lr_decoders: float = 4.0e-1
    lr_offsets_intrinsic: float = 1.0e-3
    lr_offsets_transient: float = 5.0e-3
    lr_opacity_decoders: float = 2.0e-3
    lr_covariance_decoders: float = 4.0e-3
    lr_features: float = 7.5e-3
    lr_embeddings: float = 5.0e-2
    lr_tone_map: float = 4.0e-1
    lr_final_ratio: float = 0.01

    lambda_ill: float = 1.0
    lambda_re_start: float = 2.0
    lambda_re_end: float = 0.5
    lambda_enh: float = 1.0
    lambda_dssim: float = 0.2
    lambda_smo: float = 0.001
    schedule_switch: int = 2000

    eps_l1: float = 1e-3
    eps_smooth: float = 1e-2
    eps_enh: float = 1e-3

    transient: bool = True
    weighted_l1: bool = True

    max_failures: int = 3
    opacity_cull: bool = False
    opacity_floor: float = 0.005
    cull_every: int = 500
    preview_every: int = 1000
    log_every: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ConfigError("train.iterations must be non-negative.")
        if self.warmup_iters < 0:
            raise ConfigError("train.warmup_iters must be non-negative.")
        if self.gamma <= 0:
            raise ConfigError("train.gamma must be positive.")
        if self.views_per_step < 1:
            raise ConfigError("train.views_per_step must be at least 1.")
        if self.schedule_switch < 1:
            raise ConfigError("train.schedule_switch must be at least 1.")
        if not 0.0 < self.lr_final_ratio <= 1.0:
            raise ConfigError("train.lr_final_ratio must lie in (0, 1].")
        if self.max_failures < 1:
            raise ConfigError("train.max_failures must be at least 1.")
        for item in fields(self):
            if item.name.startswith(("lr_", "lambda_", "eps_")) and getattr(self, item.name) < 0:
                raise ConfigError(f"train.{item.name} must be non-negative.")

    def weights_at(self, iteration: int) -> LossWeights:
        return lambda_schedule(iteration, self)

    def tone_map_active(self, iteration: int) -> bool:
        return iteration >= self.schedule_switch

    def base_lrs(self) -> Dict[str, float]:
        return {
            GROUP_OFFSET_INTRINSIC: self.lr_offsets_intrinsic,
            GROUP_OFFSET_TRANSIENT: self.lr_offsets_transient,
            GROUP_FEATURE: self.lr_features,
            GROUP_OPACITY: self.lr_opacity_decoders,
            GROUP_COVARIANCE: self.lr_covariance_decoders,
            GROUP_DECOMPOSITION: self.lr_decoders,
            GROUP_TONE_MAP: self.lr_tone_map,
            GROUP_EMBEDDING: self.lr_embeddings,
        }

    def learning_rates(self, iteration: int, scale: Mapping[str, float] | None = None) -> Dict[str, float]:
        """Per-group rates at ``iteration``; features stay constant, the rest decay log-linearly."""
        scale = scale or {}
        rates = {}
        for group, base in self.base_lrs().items():
            if group == GROUP_TONE_MAP and not self.tone_map_active(iteration):
                continue
            if group in (GROUP_OFFSET_TRANSIENT, GROUP_EMBEDDING) and not self.transient:
                continue
            if group == GROUP_FEATURE:
                lr = base
            else:
                lr = exponential_lr(base, base * self.lr_final_ratio, iteration, max(self.iterations, 1))
            rates[group] = lr * scale.get(group, 1.0)
        return rates


def lambda_schedule(iteration: int, cfg: TrainConfig) -> LossWeights:
    """(lambda_ill, lambda_re, lambda_enh, lambda_dssim) at ``iteration``."""
    t = min(max(iteration, 0) / cfg.schedule_switch, 1.0)
    lambda_re = cfg.lambda_re_start + (cfg.lambda_re_end - cfg.lambda_re_start) * t
    lambda_enh = cfg.lambda_enh if iteration >= cfg.schedule_switch else 0.0
    return LossWeights(ill=cfg.lambda_ill, re=lambda_re, enh=lambda_enh, dssim=cfg.lambda_dssim)


@dataclass(frozen=True, slots=True)
class DataConfig:
    dataset: str = ""
    cloud: str = ""
    anchors: str = ""
    voxel: float = 1.0
    prune: PruneConfig = field(default_factory=PruneConfig)


@dataclass(frozen=True, slots=True)
class OutputConfig:
    directory: str = "runs/latest"
    checkpoint: str = "scene.llgs"
    log: str = "train_log.jsonl"


@dataclass(frozen=True, slots=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(
            self,
            train=replace(self.train, seed=seed),
            data=replace(self.data, prune=replace(self.data.prune, seed=seed)),
        )


def _build(cls, table: Mapping[str, Any], section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"Unknown key(s) in [{section}]: {', '.join(unknown)}")
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigError(f"Invalid [{section}] table: {exc}") from exc


def config_from_dict(payload: Mapping[str, Any], *, base_dir: Path | None = None) -> RunConfig:
    unknown = sorted(set(payload) - {"model", "train", "data", "output"})
    if unknown:
        raise ConfigError(f"Unknown table(s): {', '.join(unknown)}")
    data = dict(payload.get("data", {}))
    prune = _build(PruneConfig, data.pop("prune", {}), "data.prune")
    if base_dir is not None:
        for key in ("dataset", "cloud", "anchors"):
            if data.get(key):
                data[key] = str((base_dir / data[key]).resolve())
    output = dict(payload.get("output", {}))
    if base_dir is not None and "directory" in output:
        output["directory"] = str((base_dir / output["directory"]).resolve())
    return RunConfig(
        model=_build(ModelConfig, payload.get("model", {}), "model"),
        train=_build(TrainConfig, payload.get("train", {}), "train"),
        data=_build(DataConfig, {**data, "prune": prune}, "data"),
        output=_build(OutputConfig, output, "output"),
    )


def load_config(path: str | Path) -> RunConfig:
    """Read a run TOML file; relative paths inside it resolve against the file's directory."""
    source = Path(path)
    try:
        payload = tomllib.loads(source.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    config = config_from_dict(payload, base_dir=source.resolve().parent)
    logger.debug("Loaded configuration from %s", source)
    return config
