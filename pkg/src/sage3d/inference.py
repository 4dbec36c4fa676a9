"""Checkpoint-backed inference: rebuild the generator and synthesize
photo/semantics/drawing triplets without touching the checkpoint."""

from __future__ import annotations

import torch

from .checkpoint import Checkpoint
from .config import PoseDistribution, TrainConfig
from .geometry import CameraPose
from .model import PortraitGenerator, SynthOutput
from .training import build_generator, load_into_modules


def render_resolution(config: TrainConfig, stage: int) -> int:
    schedule = config.stage2 if (stage == 2 and config.stage2) else config.stage1
    if not schedule:
        schedule = config.stage2 or config.stage1
    return schedule[-1].resolution


def pose_from_config(poses: PoseDistribution, yaw: float = 0.0,
                     pitch: float = 0.0) -> CameraPose:
    return CameraPose(yaw=yaw, pitch=pitch, radius=poses.radius, fov=poses.fov,
                      near=poses.near, far=poses.far)


def latent_from_seed(config: TrainConfig, seed: int) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return torch.randn(config.model.z_dim, generator=g)


def generator_from_checkpoint(ckpt: Checkpoint) -> PortraitGenerator:
    gen = build_generator(ckpt.config, stage=ckpt.stage)
    load_into_modules(ckpt, gen, {})
    gen.eval()
    for p in gen.parameters():
        p.requires_grad_(False)
    return gen


def synthesize_from_checkpoint(ckpt: Checkpoint, seed: int, yaw: float,
                               pitch: float,
                               gen: PortraitGenerator | None = None) -> SynthOutput:
    if gen is None:
        gen = generator_from_checkpoint(ckpt)
    z = latent_from_seed(ckpt.config, seed)
    pose = pose_from_config(ckpt.config.poses, yaw=yaw, pitch=pitch)
    with torch.no_grad():
        return gen.synthesize(z, pose, render_resolution(ckpt.config, ckpt.stage))
