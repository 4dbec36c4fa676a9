"""Pluggable photo-to-drawing stylizers for data augmentation.

A stylizer is any callable mapping a (3, H, W) image in [-1, 1] to another
one, with a `stylizer_id` string for the augmentation manifest. The
built-in difference-of-Gaussians edge filter produces line-drawing-like
images and exists for pipeline tests, not as an artistic claim.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F


class IdentityStylizer:
    stylizer_id = "identity"

    def __call__(self, image: torch.Tensor) -> torch.Tensor:
        return image.clone()


def _gaussian_kernel1d(sigma: float, dtype: torch.dtype) -> torch.Tensor:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    xs = torch.arange(-radius, radius + 1, dtype=dtype)
    k = torch.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def gaussian_blur(image: torch.Tensor, sigma: float) -> torch.Tensor:
    """Separable Gaussian blur with reflect padding; (C, H, W) in, same out."""
    k = _gaussian_kernel1d(sigma, image.dtype)
    c = image.shape[0]
    pad = (len(k) - 1) // 2
    x = image[None]
    x = F.pad(x, (pad, pad, 0, 0), mode="reflect")
    x = F.conv2d(x, k.reshape(1, 1, 1, -1).expand(c, 1, 1, -1), groups=c)
    x = F.pad(x, (0, 0, pad, pad), mode="reflect")
    x = F.conv2d(x, k.reshape(1, 1, -1, 1).expand(c, 1, -1, 1), groups=c)
    return x[0]


class EdgeFilterStylizer:
    """Difference-of-Gaussians edge extractor: dark strokes on white."""

    def __init__(self, sigma: float = 1.0, ratio: float = 1.6, gain: float = 6.0):
        self.sigma = sigma
        self.ratio = ratio
        self.gain = gain
        self.stylizer_id = f"edge_dog(sigma={sigma},ratio={ratio},gain={gain})"

    def __call__(self, image: torch.Tensor) -> torch.Tensor:
        gray = image.mean(dim=0, keepdim=True)
        fine = gaussian_blur(gray, self.sigma)
        coarse = gaussian_blur(gray, self.sigma * self.ratio)
        edges = (fine - coarse).abs() * self.gain
        drawing = (1.0 - edges.clamp(0.0, 1.0)) * 2.0 - 1.0
        return drawing.expand(3, -1, -1).clone()


BUILTIN_STYLIZERS = {
    "identity": IdentityStylizer,
    "edge": EdgeFilterStylizer,
}


def get_stylizer(name: str):
    if name not in BUILTIN_STYLIZERS:
        raise ValueError(f"unknown stylizer {name!r}; choose from {sorted(BUILTIN_STYLIZERS)}")
    return BUILTIN_STYLIZERS[name]()
