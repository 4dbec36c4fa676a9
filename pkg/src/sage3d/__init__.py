"""Viewpoint-conditioned portrait drawing synthesis with semantic guidance."""

__version__ = "0.1.0"

from .config import (AblationFlags, ConfigError, LossWeights, ModelConfig,
                     PoseDistribution, ScheduleEntry, TrainConfig, desk_profile,
                     full_profile, load_config, save_config)
from .geometry import CameraFrame, CameraPose, RayBundle, WarpResult

__all__ = [
    "AblationFlags", "CameraFrame", "CameraPose", "ConfigError", "LossWeights",
    "ModelConfig", "PoseDistribution", "RayBundle", "ScheduleEntry",
    "TrainConfig", "WarpResult", "desk_profile", "full_profile", "load_config",
    "save_config", "__version__",
]
