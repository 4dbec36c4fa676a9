"""Discriminators for semantic maps, photos, and drawings, plus the
gradient penalty on real samples.

One conv trunk serves all three roles; they differ in input channels
(19 for semantics, 3 for images/drawings). The trunk is a strided
leaky-ReLU stack with a 1x1 from-input conv per resolution stage, so a
progressive schedule can feed it any power-of-two resolution between 8 and
its configured maximum without touching parameters.
"""

from __future__ import annotations

import math

import torch
from torch import nn
import torch.nn.functional as F

from .config import NUM_SEMANTIC_CLASSES, ModelConfig

ROLE_CHANNELS = {"semantic": NUM_SEMANTIC_CLASSES, "image": 3, "drawing": 3}
MIN_RESOLUTION = 8


class Discriminator(nn.Module):
    def __init__(self, role: str, cfg: ModelConfig, max_resolution: int,
                 generator: torch.Generator):
        super().__init__()
        if role not in ROLE_CHANNELS:
            raise ValueError(f"unknown discriminator role {role!r}")
        if max_resolution < MIN_RESOLUTION or max_resolution & (max_resolution - 1):
            raise ValueError(f"max_resolution must be a power of two >= {MIN_RESOLUTION}")
        self.role = role
        self.input_channels = ROLE_CHANNELS[role]
        self.max_resolution = max_resolution

        def width(res: int) -> int:
            return min(cfg.disc_base_channels * (max_resolution // res),
                       cfg.disc_max_channels)

        self.resolutions = []
        res = max_resolution
        while res >= MIN_RESOLUTION:
            self.resolutions.append(res)
            res //= 2

        self.from_input = nn.ModuleDict({
            str(r): nn.Conv2d(self.input_channels, width(r), 1) for r in self.resolutions})
        self.blocks = nn.ModuleDict({
            str(r): nn.Sequential(
                nn.Conv2d(width(r), width(r), 3, padding=1),
                nn.LeakyReLU(0.2),
                nn.Conv2d(width(r), width(r // 2) if r > MIN_RESOLUTION else width(r),
                          3, stride=2, padding=1),
                nn.LeakyReLU(0.2),
            ) for r in self.resolutions})
        final_width = width(MIN_RESOLUTION)
        self.score = nn.Linear(final_width * (MIN_RESOLUTION // 2) ** 2, 1)

        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                fan_in = module.weight[0].numel()
                std = math.sqrt(2.0 / (1 + 0.2 ** 2) / fan_in)
                with torch.no_grad():
                    module.weight.normal_(0.0, std, generator=generator)
                    module.bias.zero_()

    def stage_index(self, resolution: int) -> int:
        """Progressive stage for an input resolution (0 = finest)."""
        if resolution not in self.resolutions:
            raise ValueError(
                f"resolution {resolution} not in trunk range {self.resolutions}")
        return self.resolutions.index(resolution)

    def forward(self, batch: torch.Tensor) -> torch.Tensor:
        if batch.dim() != 4:
            raise ValueError("discriminator expects a (B, C, H, W) batch")
        if batch.shape[1] != self.input_channels:
            raise ValueError(
                f"{self.role} discriminator expects {self.input_channels} channels, "
                f"got {batch.shape[1]}")
        res = batch.shape[-1]
        idx = self.stage_index(res)
        x = F.leaky_relu(self.from_input[str(res)](batch), 0.2)
        for r in self.resolutions[idx:]:
            x = self.blocks[str(r)](x)
        return self.score(x.flatten(1)).squeeze(-1)


def discriminate(d: Discriminator, batch: torch.Tensor) -> torch.Tensor:
    """Unbounded per-sample realism logits."""
    return d(batch)


def r1_penalty(d: nn.Module, real_batch: torch.Tensor) -> torch.Tensor:
    """Mean squared norm of the score gradient at the real samples.

    Differentiable w.r.t. the discriminator parameters (the graph is kept),
    non-negative, and zero exactly when the input-gradient vanishes.
    """
    batch = real_batch.detach().requires_grad_(True)
    scores = d(batch)
    (grad,) = torch.autograd.grad(scores.sum(), batch, create_graph=True)
    return grad.flatten(1).pow(2).sum(dim=1).mean()
