"""Run configuration: model sizes, training schedules, loss weights, pose prior.

A run is described by a single YAML file with nested sections (model, stages,
data, losses, poses). Everything is validated on load; bad values raise
ConfigError so the CLI can exit with a usage error instead of a traceback.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

# Decoders upsample the rendered feature grid by this fixed factor (three 2x stages).
UPSAMPLE_FACTOR = 8

NUM_SEMANTIC_CLASSES = 19


class ConfigError(ValueError):
    """Raised for invalid or inconsistent run configuration."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class PoseDistribution:
    """Camera prior: yaw/pitch drawn per sample, the rest held fixed.

    kind is "gaussian" (mean/std, truncated at the hard bounds) or
    "uniform" (min/max). Angles in radians.
    """

    kind: str = "gaussian"
    yaw_mean: float = 0.0
    yaw_std: float = 0.3
    pitch_mean: float = 0.0
    pitch_std: float = 0.15
    yaw_min: float = -math.pi / 2
    yaw_max: float = math.pi / 2
    pitch_min: float = -math.pi / 2
    pitch_max: float = math.pi / 2
    radius: float = 1.0
    fov: float = 12.0 * math.pi / 180.0
    near: float = 0.88
    far: float = 1.12

    def validate(self) -> None:
        if self.kind not in ("gaussian", "uniform"):
            raise ConfigError(f"unknown pose distribution kind {self.kind!r}")
        if self.yaw_min >= self.yaw_max or self.pitch_min >= self.pitch_max:
            raise ConfigError("pose bounds inverted")
        if self.kind == "gaussian" and (self.yaw_std < 0 or self.pitch_std < 0):
            raise ConfigError("pose stddev must be non-negative")
        if not (0.0 < self.fov < math.pi):
            raise ConfigError("fov must be in (0, pi)")
        if self.near >= self.far:
            raise ConfigError("near must be < far")
        if self.radius <= 0:
            raise ConfigError("radius must be positive")


@dataclass
class LossWeights:
    """r1: gradient penalty weight; rec: reconstruction weight;
    l1_mix: L1 share of the reconstruction term (remainder is DSSIM)."""

    r1: float = 0.1
    rec: float = 1.0
    l1_mix: float = 0.25

    def validate(self) -> None:
        if self.r1 < 0 or self.rec < 0:
            raise ConfigError("loss weights r1 and rec must be non-negative")
        if not (0.0 <= self.l1_mix <= 1.0):
            raise ConfigError("l1_mix must lie in [0, 1]")


@dataclass
class ScheduleEntry:
    """One progressive-training phase. resolution is the volume-render
    resolution; images seen by the discriminators are 8x larger."""

    resolution: int
    g_lr: float
    d_lr: float
    batch_size: int
    steps: int

    @property
    def image_resolution(self) -> int:
        return self.resolution * UPSAMPLE_FACTOR

    def validate(self) -> None:
        if not _is_power_of_two(self.resolution):
            raise ConfigError(f"resolution {self.resolution} is not a power of two")
        if self.g_lr <= 0 or self.d_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")


@dataclass
class ModelConfig:
    z_dim: int = 256
    style_dim: int = 256
    feature_channels: int = 256
    film_layers: int = 8
    film_hidden: int = 256
    mapping_hidden: int = 256
    mapping_blocks: int = 3
    n_samples: int = 24
    decoder_channels: tuple[int, ...] = (128, 64, 32)
    translator_base: int = 64
    unet_depth: int = 5
    disc_base_channels: int = 16
    disc_max_channels: int = 256

    def validate(self) -> None:
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if len(self.decoder_channels) != 3:
            raise ConfigError("decoder_channels must list three upsampling stages")
        for name in ("z_dim", "style_dim", "feature_channels", "film_layers",
                     "film_hidden", "translator_base", "unet_depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")


@dataclass
class AblationFlags:
    end_to_end: bool = False
    use_translator: bool = True
    use_spade: bool = True


@dataclass
class TrainConfig:
    seed: int = 0
    style_name: str = "default"
    model: ModelConfig = field(default_factory=ModelConfig)
    stage1: list[ScheduleEntry] = field(default_factory=list)
    stage2: list[ScheduleEntry] = field(default_factory=list)
    losses: LossWeights = field(default_factory=LossWeights)
    poses: PoseDistribution = field(default_factory=PoseDistribution)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    adam_beta1: float = 0.0
    adam_beta2: float = 0.9

    def validate(self) -> None:
        self.model.validate()
        self.losses.validate()
        self.poses.validate()
        if not self.stage1 and not self.ablation.end_to_end:
            raise ConfigError("stage1 schedule is empty")
        for entry in list(self.stage1) + list(self.stage2):
            entry.validate()

    def max_image_resolution(self) -> int:
        entries = list(self.stage1) + list(self.stage2)
        if not entries:
            raise ConfigError("no schedule entries configured")
        return max(e.image_resolution for e in entries)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        try:
            cfg = cls(
                seed=int(raw.get("seed", 0)),
                style_name=str(raw.get("style_name", "default")),
                model=ModelConfig(**_tupled(raw.get("model", {}))),
                stage1=[ScheduleEntry(**e) for e in raw.get("stage1", [])],
                stage2=[ScheduleEntry(**e) for e in raw.get("stage2", [])],
                losses=LossWeights(**raw.get("losses", {})),
                poses=PoseDistribution(**raw.get("poses", {})),
                ablation=AblationFlags(**raw.get("ablation", {})),
                adam_beta1=float(raw.get("adam_beta1", 0.0)),
                adam_beta2=float(raw.get("adam_beta2", 0.9)),
            )
        except TypeError as exc:
            raise ConfigError(f"bad config structure: {exc}") from exc
        cfg.validate()
        return cfg


def _tupled(model_raw: dict) -> dict:
    out = dict(model_raw)
    if "decoder_channels" in out:
        out["decoder_channels"] = tuple(out["decoder_channels"])
    return out


def load_config(path: str | Path) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} does not contain a mapping")
    return TrainConfig.from_dict(raw)


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def config_hash(cfg: TrainConfig) -> str:
    payload = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def desk_profile(seed: int = 0, steps1: int = 200, steps2: int = 200) -> TrainConfig:
    """Small CPU profile: 16^2 render (128^2 images), widths cut 8x."""
    model = ModelConfig(
        z_dim=32, style_dim=32, feature_channels=32,
        film_layers=8, film_hidden=32, mapping_hidden=32,
        n_samples=16, decoder_channels=(16, 8, 4),
        translator_base=8, disc_base_channels=8, disc_max_channels=64,
    )
    sched1 = [ScheduleEntry(resolution=16, g_lr=6e-5, d_lr=2e-4, batch_size=4, steps=steps1)]
    sched2 = [ScheduleEntry(resolution=16, g_lr=6e-5, d_lr=2e-4, batch_size=4, steps=steps2)]
    return TrainConfig(seed=seed, model=model, stage1=sched1, stage2=sched2)


def full_profile(seed: int = 0) -> TrainConfig:
    """Mirrors the published schedule: per-phase lr/batch at 64/128/256
    image resolution (render 8/16/32), Adam(0, 0.9)."""
    model = ModelConfig()
    sched = [
        ScheduleEntry(resolution=8, g_lr=6e-5, d_lr=2e-4, batch_size=36, steps=50_000),
        ScheduleEntry(resolution=16, g_lr=5e-5, d_lr=2e-4, batch_size=24, steps=50_000),
        ScheduleEntry(resolution=32, g_lr=3e-5, d_lr=1e-4, batch_size=24, steps=50_000),
    ]
    sched2 = [ScheduleEntry(resolution=32, g_lr=3e-5, d_lr=1e-4, batch_size=24, steps=50_000)]
    return TrainConfig(seed=seed, model=model, stage1=sched, stage2=sched2)
