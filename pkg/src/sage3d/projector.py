"""Latent-and-viewpoint-conditioned feature projector.

A mapping MLP turns the latent z into per-layer (frequency, phase) pairs for
a sine-activated implicit field plus a style vector for the decoders. The
field is integrated along camera rays into a feature grid, a low-resolution
RGB image, and an expected-depth map. During training a second view is
rendered, warped into the primary view, and linearly mixed into the primary
features; at inference the primary render is used as-is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig, PoseDistribution
from .geometry import (CameraPose, RayBundle, WarpResult, expected_depth,
                       generate_rays, sample_viewpoint, warp_to_primary)

# Sine layers run at frequency 15*f + 30 (f from the mapping network), the
# usual scaling for this family of generators.
FREQ_SCALE = 15.0
FREQ_SHIFT = 30.0


@dataclass
class StyleParams:
    """Per-layer (frequency, phase) modulation vectors plus the style code."""

    w_c: list[tuple[torch.Tensor, torch.Tensor]]
    w_s: torch.Tensor

    def detach(self) -> "StyleParams":
        return StyleParams([(f.detach(), p.detach()) for f, p in self.w_c],
                           self.w_s.detach())


@dataclass
class FieldOutput:
    density: torch.Tensor    # (M,), non-negative
    features: torch.Tensor   # (M, C_F)
    rgb: torch.Tensor        # (M, 3) in [-1, 1]


@dataclass
class RenderOutput:
    features: torch.Tensor       # (C_F, H, W)
    rgb: torch.Tensor            # (3, H, W) in [-1, 1]
    depth: torch.Tensor          # (H, W)
    weights: torch.Tensor        # (H, W, N), per-ray sums <= 1
    sample_depths: torch.Tensor  # (H, W, N)


@dataclass
class ProjectionResult:
    features: torch.Tensor             # mixed feature grid (C_F, H, W)
    style: StyleParams
    rgb_pri: torch.Tensor              # primary low-res image (3, H, W)
    depth: torch.Tensor                # primary expected depth (H, W)
    rgb_warp: torch.Tensor | None      # aux image warped into the primary view
    validity: torch.Tensor             # (H, W) bool
    aux_pose: CameraPose | None = None
    mix: float | None = None


def _lrelu_init(linear: nn.Linear, generator: torch.Generator) -> None:
    fan_in = linear.weight.shape[1]
    std = math.sqrt(2.0 / (1 + 0.2 ** 2) / fan_in)
    with torch.no_grad():
        linear.weight.normal_(0.0, std, generator=generator)
        linear.bias.zero_()


def _sine_init(linear: nn.Linear, generator: torch.Generator, first: bool) -> None:
    fan_in = linear.weight.shape[1]
    bound = 1.0 / fan_in if first else math.sqrt(6.0 / fan_in) / 25.0
    with torch.no_grad():
        linear.weight.uniform_(-bound, bound, generator=generator)
        linear.bias.uniform_(-bound, bound, generator=generator)


class MappingNetwork(nn.Module):
    """z -> L (frequency, phase) pairs and the style vector w_s."""

    def __init__(self, cfg: ModelConfig, generator: torch.Generator):
        super().__init__()
        self.cfg = cfg
        out_dim = cfg.film_layers * 2 * cfg.film_hidden + cfg.style_dim
        dims = [cfg.z_dim] + [cfg.mapping_hidden] * (cfg.mapping_blocks + 1)
        layers: list[nn.Module] = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            layers += [nn.Linear(d_in, d_out), nn.LeakyReLU(0.2)]
        layers.append(nn.Linear(dims[-1], out_dim))
        self.net = nn.Sequential(*layers)
        for m in self.net:
            if isinstance(m, nn.Linear):
                _lrelu_init(m, generator)
        with torch.no_grad():
            self.net[-1].weight *= 0.25

    def forward(self, z: torch.Tensor) -> StyleParams:
        if z.shape != (self.cfg.z_dim,):
            raise ValueError(f"latent must have shape ({self.cfg.z_dim},), got {tuple(z.shape)}")
        out = self.net(z)
        h, n_layers = self.cfg.film_hidden, self.cfg.film_layers
        freqs = out[: n_layers * h].reshape(n_layers, h)
        phases = out[n_layers * h: 2 * n_layers * h].reshape(n_layers, h)
        w_s = out[2 * n_layers * h:]
        return StyleParams(w_c=[(freqs[i], phases[i]) for i in range(n_layers)], w_s=w_s)


class FiLMLayer(nn.Module):
    """y = sin(freq * (Wx + b) + phase)."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.layer = nn.Linear(in_dim, out_dim)

    def forward(self, x: torch.Tensor, freq: torch.Tensor, phase: torch.Tensor) -> torch.Tensor:
        return torch.sin(freq * self.layer(x) + phase)


class FeatureProjector(nn.Module):
    """Mapping network + implicit field + volume rendering + stereo mixup."""

    def __init__(self, cfg: ModelConfig, generator: torch.Generator):
        super().__init__()
        self.cfg = cfg
        self.mapping = MappingNetwork(cfg, generator)
        h = cfg.film_hidden
        self.film = nn.ModuleList(
            [FiLMLayer(3, h)] + [FiLMLayer(h, h) for _ in range(cfg.film_layers - 1)])
        self.sigma_head = nn.Linear(h, 1)
        self.feature_head = nn.Linear(h, cfg.feature_channels)
        self.rgb_head = nn.Linear(h, 3)
        for i, layer in enumerate(self.film):
            _sine_init(layer.layer, generator, first=(i == 0))
        for head in (self.sigma_head, self.feature_head, self.rgb_head):
            _sine_init(head, generator, first=False)

    def mapping_network(self, z: torch.Tensor) -> StyleParams:
        return self.mapping(z)

    def field_forward(self, points: torch.Tensor,
                      w_c: list[tuple[torch.Tensor, torch.Tensor]]) -> FieldOutput:
        """Evaluate the implicit field at (M, 3) world points."""
        if len(w_c) != len(self.film):
            raise ValueError(f"expected {len(self.film)} modulation pairs, got {len(w_c)}")
        x = points
        for layer, (freq, phase) in zip(self.film, w_c):
            x = layer(x, FREQ_SCALE * freq + FREQ_SHIFT, phase)
        density = F.softplus(self.sigma_head(x).squeeze(-1))
        features = self.feature_head(x)
        rgb = torch.tanh(self.rgb_head(x))
        return FieldOutput(density=density, features=features, rgb=rgb)

    def volume_render(self, rays: RayBundle,
                      w_c: list[tuple[torch.Tensor, torch.Tensor]],
                      n_samples: int, near: float, far: float,
                      generator: torch.Generator | None = None) -> RenderOutput:
        """Integrate the field along each ray.

        Samples are bin midpoints (deterministic) unless a generator is
        given, in which case they are stratified within the bins. Weights
        follow the transmittance law w_i = T_i * (1 - exp(-sigma_i * d_i)).
        """
        if n_samples < 2:
            raise ValueError(f"n_samples must be >= 2, got {n_samples}")
        h, w = rays.resolution
        dtype = rays.directions.dtype
        span = far - near
        step = span / n_samples
        if generator is None:
            t = near + (torch.arange(n_samples, dtype=dtype) + 0.5) * step
            t = t.expand(h, w, n_samples)
            deltas = torch.full((h, w, n_samples), step, dtype=dtype)
        else:
            jitter = torch.rand((h, w, n_samples), generator=generator, dtype=dtype)
            edges = near + torch.arange(n_samples, dtype=dtype) * step
            t = edges + jitter * step
            deltas = torch.cat([t[..., 1:] - t[..., :-1], far - t[..., -1:]], dim=-1)

        points = rays.origins[..., None, :] + t[..., None] * rays.directions[..., None, :]
        out = self.field_forward(points.reshape(-1, 3), w_c)
        sigma = out.density.reshape(h, w, n_samples)
        feats = out.features.reshape(h, w, n_samples, -1)
        rgb = out.rgb.reshape(h, w, n_samples, 3)

        optical = sigma * deltas
        trans = torch.exp(-torch.cumsum(
            torch.cat([torch.zeros_like(optical[..., :1]), optical[..., :-1]], dim=-1), dim=-1))
        weights = trans * (1.0 - torch.exp(-optical))

        feat_grid = (weights[..., None] * feats).sum(dim=-2).permute(2, 0, 1)
        rgb_grid = (weights[..., None] * rgb).sum(dim=-2).permute(2, 0, 1)
        depth = expected_depth(weights, t, far=far)
        return RenderOutput(features=feat_grid, rgb=rgb_grid, depth=depth,
                            weights=weights, sample_depths=t)

    def project(self, z: torch.Tensor, pose: CameraPose, resolution: int,
                mode: str = "eval", generator: torch.Generator | None = None,
                pose_dist: PoseDistribution | None = None,
                mix: float | None = None,
                aux_pose: CameraPose | None = None,
                n_samples: int | None = None) -> ProjectionResult:
        """Render the feature grid for (z, pose).

        Train mode renders an auxiliary view, warps it into the primary
        view, and mixes the feature grids; eval mode renders the primary
        view only and is a pure function of (parameters, z, pose).
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        n_samples = n_samples or self.cfg.n_samples
        style = self.mapping(z)
        rays = generate_rays(pose, (resolution, resolution),
                             dtype=self.sigma_head.weight.dtype)
        pri = self.volume_render(rays, style.w_c, n_samples, pose.near, pose.far,
                                 generator=generator if mode == "train" else None)
        if mode == "eval":
            valid = torch.ones(resolution, resolution, dtype=torch.bool)
            return ProjectionResult(features=pri.features, style=style,
                                    rgb_pri=pri.rgb, depth=pri.depth,
                                    rgb_warp=None, validity=valid)

        if aux_pose is None:
            if pose_dist is None:
                raise ValueError("train-mode projection needs pose_dist or aux_pose")
            if generator is None:
                raise ValueError("train-mode projection needs a generator")
            aux_pose = sample_viewpoint(generator, pose_dist)
        aux_rays = generate_rays(aux_pose, (resolution, resolution),
                                 dtype=rays.directions.dtype)
        aux = self.volume_render(aux_rays, style.w_c, n_samples, aux_pose.near,
                                 aux_pose.far, generator=generator)

        # One warp for image+features keeps their validity masks identical.
        stacked = torch.cat([aux.rgb, aux.features], dim=0)
        warp = warp_to_primary(stacked, pri.depth, cam_src=aux_pose, cam_dst=pose)
        rgb_warp = warp.warped[:3]
        feat_warp = WarpResult(warped=warp.warped[3:], validity_mask=warp.validity_mask)

        if mix is None:
            mix = torch.rand((), generator=generator).item() if generator is not None else 1.0
        mixed = stereo_mixup(pri.features, feat_warp, mix)
        return ProjectionResult(features=mixed, style=style, rgb_pri=pri.rgb,
                                depth=pri.depth, rgb_warp=rgb_warp,
                                validity=warp.validity_mask, aux_pose=aux_pose,
                                mix=mix)


def stereo_mixup(f_pri: torch.Tensor, f_warp: WarpResult, mix: float) -> torch.Tensor:
    """mix * primary + (1 - mix) * warped on valid pixels, primary elsewhere."""
    if not (0.0 <= mix <= 1.0):
        raise ValueError(f"mix must lie in [0, 1], got {mix}")
    if f_warp.warped.shape != f_pri.shape:
        raise ValueError(
            f"shape mismatch: {tuple(f_pri.shape)} vs {tuple(f_warp.warped.shape)}")
    blend = mix * f_pri + (1.0 - mix) * f_warp.warped
    return torch.where(f_warp.validity_mask, blend, f_pri)
