"""Evaluation metrics: Fréchet feature distance, its per-image variant over
spatial feature maps, sliced Wasserstein distance over Laplacian-pyramid
patch descriptors, and per-view quality curves.

The default embedder is a fixed-seed random-projection conv stack so the
whole suite is hermetic; a pretrained embedder can be plugged in through
the same interface for faithful offline numbers.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .geometry import CameraPose

SWD_PATCH = 7
SWD_PROJECTIONS = 256
SWD_REPORT_SCALE = 1e3
EIG_CLIP = -1e-6


@dataclass
class FeatureStats:
    mean: np.ndarray        # (d,)
    cov: np.ndarray         # (d, d), symmetric

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "FeatureStats":
        """samples: (n, d). Covariance is the biased (1/n) fit, symmetrized."""
        mean = samples.mean(axis=0)
        centered = samples - mean
        cov = centered.T @ centered / samples.shape[0]
        cov = (cov + cov.T) / 2.0
        return cls(mean=mean, cov=cov)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    if vals.min() < EIG_CLIP:
        warnings.warn(f"matrix eigenvalue {vals.min():.3e} below clip threshold",
                      RuntimeWarning)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})."""
    if a.mean.shape != b.mean.shape:
        raise ValueError(f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}")
    sqrt_a = _psd_sqrt(a.cov)
    inner = sqrt_a @ b.cov @ sqrt_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    if vals.min() < EIG_CLIP:
        warnings.warn(f"cross-term eigenvalue {vals.min():.3e} below clip threshold",
                      RuntimeWarning)
    trace_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    diff = a.mean - b.mean
    return float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_sqrt)


class RandomConvEmbedder:
    """Deterministic random-projection conv stack. embed() yields a spatial
    feature map (C, h, w); embed_vector() pools it to (C,)."""

    def __init__(self, seed: int = 0, channels: int = 16, layers: int = 3):
        self.embedder_id = f"randconv(seed={seed},channels={channels},layers={layers})"
        self.channels = channels
        g = torch.Generator().manual_seed(seed)
        self.kernels = []
        c_in = 3
        for _ in range(layers):
            k = torch.randn(channels, c_in, 3, 3, generator=g)
            k = k / math.sqrt(c_in * 9)
            self.kernels.append(k)
            c_in = channels

    def embed(self, image: torch.Tensor) -> torch.Tensor:
        x = image[None] if image.dim() == 3 else image
        for i, k in enumerate(self.kernels):
            stride = 2 if i > 0 else 1
            x = F.conv2d(x, k, stride=stride, padding=1)
            x = F.leaky_relu(x, 0.2)
        return x[0]

    def embed_vector(self, image: torch.Tensor) -> torch.Tensor:
        return self.embed(image).mean(dim=(-2, -1))


def fid(generated: list[torch.Tensor], real: list[torch.Tensor], embedder) -> float:
    """Fréchet distance between Gaussian fits of pooled embeddings."""
    if not generated or not real:
        raise ValueError("image sets must be non-empty")
    gen_feats = np.stack([embedder.embed_vector(im).numpy() for im in generated])
    real_feats = np.stack([embedder.embed_vector(im).numpy() for im in real])
    return frechet_distance(FeatureStats.from_samples(gen_feats),
                            FeatureStats.from_samples(real_feats))


def sifid(generated: list[torch.Tensor], real: list[torch.Tensor], embedder,
          pairing: str = "index") -> float:
    """Mean per-image Fréchet distance over spatial feature positions.

    Images are paired by file/list order ("index") or each generated image
    against the first real image ("first"); the spatial positions of each
    embedding map are the Gaussian-fit samples.
    """
    if not generated or not real:
        raise ValueError("image sets must be non-empty")
    if pairing not in ("index", "first"):
        raise ValueError(f"unknown pairing {pairing!r}")
    distances = []
    for i, gen_img in enumerate(generated):
        real_img = real[i % len(real)] if pairing == "index" else real[0]
        g_map = embedder.embed(gen_img)
        r_map = embedder.embed(real_img)
        g_samples = g_map.flatten(1).T.numpy()
        r_samples = r_map.flatten(1).T.numpy()
        distances.append(frechet_distance(FeatureStats.from_samples(g_samples),
                                          FeatureStats.from_samples(r_samples)))
    return float(np.mean(distances))


def sliced_wasserstein_pointsets(a: torch.Tensor, b: torch.Tensor,
                                 projections: torch.Tensor) -> float:
    """Average 1-D Wasserstein-1 distance of two (n, d) point sets over the
    given (k, d) unit projection directions."""
    if a.shape != b.shape:
        raise ValueError(f"point sets must match in shape: {a.shape} vs {b.shape}")
    pa = a.double() @ projections.double().T
    pb = b.double() @ projections.double().T
    pa, _ = pa.sort(dim=0)
    pb, _ = pb.sort(dim=0)
    return (pa - pb).abs().mean().item()


def _unit_projections(k: int, d: int, rng: torch.Generator) -> torch.Tensor:
    dirs = torch.randn(k, d, generator=rng, dtype=torch.float64)
    return dirs / dirs.norm(dim=1, keepdim=True)


def _laplacian_pyramid(image: torch.Tensor, levels: int) -> list[torch.Tensor]:
    pyramid = []
    current = image[None]
    for _ in range(levels - 1):
        down = F.avg_pool2d(current, 2)
        up = F.interpolate(down, size=current.shape[-2:], mode="bilinear",
                           align_corners=False)
        pyramid.append((current - up)[0])
        current = down
    pyramid.append(current[0])
    return pyramid


def _patch_positions(hw: tuple[int, int], n_patches: int,
                     rng: torch.Generator) -> tuple[list[int], list[int]]:
    """With-replacement patch corners; shared across images so the metric is
    invariant under identical permutation of both sets."""
    h, w = hw
    rows = torch.randint(0, max(h - SWD_PATCH + 1, 1), (n_patches,), generator=rng)
    cols = torch.randint(0, max(w - SWD_PATCH + 1, 1), (n_patches,), generator=rng)
    return rows.tolist(), cols.tolist()


def _patch_descriptors(image: torch.Tensor, rows: list[int],
                       cols: list[int]) -> torch.Tensor:
    c, h, w = image.shape
    if h < SWD_PATCH or w < SWD_PATCH:
        image = F.interpolate(image[None], size=(max(h, SWD_PATCH), max(w, SWD_PATCH)),
                              mode="bilinear", align_corners=False)[0]
    patches = torch.stack([image[:, r:r + SWD_PATCH, s:s + SWD_PATCH]
                           for r, s in zip(rows, cols)])
    return patches.reshape(len(rows), -1)


def sliced_wasserstein(a_images: list[torch.Tensor], b_images: list[torch.Tensor],
                       n_projections: int = SWD_PROJECTIONS,
                       patches_per_image: int = 64, levels: int = 3,
                       seed: int = 0) -> float:
    """Patch-descriptor SWD averaged over Laplacian-pyramid levels.

    Descriptors are mean/std-normalized per channel before projection.
    Reported value is scaled by 1e3 (record SWD_REPORT_SCALE alongside).
    """
    if not a_images or not b_images:
        raise ValueError("image sets must be non-empty")
    rng = torch.Generator().manual_seed(seed)
    level_values = []
    for level in range(levels):
        level_hw = _laplacian_pyramid(a_images[0], levels)[level].shape[-2:]
        patch_rng = torch.Generator().manual_seed(seed + 7919 * (level + 1))
        rows, cols = _patch_positions((max(level_hw[0], SWD_PATCH),
                                       max(level_hw[1], SWD_PATCH)),
                                      patches_per_image, patch_rng)
        descs = []
        for image_set in (a_images, b_images):
            per_set = []
            for image in image_set:
                pyr = _laplacian_pyramid(image, levels)
                per_set.append(_patch_descriptors(pyr[level], rows, cols))
            descs.append(torch.cat(per_set))
        a_desc, b_desc = descs
        n = min(a_desc.shape[0], b_desc.shape[0])
        a_desc, b_desc = a_desc[:n].double(), b_desc[:n].double()
        mean = torch.cat([a_desc, b_desc]).mean(dim=0)
        std = torch.cat([a_desc, b_desc]).std(dim=0) + 1e-8
        a_desc = (a_desc - mean) / std
        b_desc = (b_desc - mean) / std
        projections = _unit_projections(n_projections, a_desc.shape[1], rng)
        level_values.append(sliced_wasserstein_pointsets(a_desc, b_desc, projections))
    return float(np.mean(level_values)) * SWD_REPORT_SCALE


def per_view_curve(ckpt, pose_list: list[CameraPose], real: list[torch.Tensor],
                   embedder, z_seeds: list[int] | None = None,
                   csv_path: str | Path | None = None) -> list[dict]:
    """Per-pose SIFID from a fixed latent set; one output row per pose."""
    from .inference import generator_from_checkpoint, latent_from_seed, render_resolution

    gen = generator_from_checkpoint(ckpt)
    resolution = render_resolution(ckpt.config, ckpt.stage)
    z_seeds = z_seeds if z_seeds is not None else list(range(4))
    rows = []
    for idx, pose in enumerate(pose_list):
        images = []
        for seed in z_seeds:
            z = latent_from_seed(ckpt.config, seed)
            with torch.no_grad():
                images.append(gen.synthesize(z, pose, resolution).drawing)
        value = sifid(images, real, embedder)
        rows.append({"pose_index": idx, "yaw": pose.yaw, "pitch": pose.pitch,
                     "sifid": value})
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["pose_index", "yaw", "pitch", "sifid"])
            writer.writeheader()
            writer.writerows(rows)
    return rows
