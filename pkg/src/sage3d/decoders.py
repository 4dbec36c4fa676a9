"""Style-modulated upsampling decoders.

The image and semantic decoders are two instances of one blueprint: three
nearest-neighbor-upsample + 3x3 conv stages, each followed by channel-wise
style modulation, with a per-scale 1x1 output head. Head outputs are
upsampled to the finest scale and summed; the image variant bounds the sum
with tanh, the semantic variant returns 19-channel logits.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import NUM_SEMANTIC_CLASSES, ModelConfig

ADAIN_EPS = 1e-5


def instance_normalize(x: torch.Tensor, eps: float = ADAIN_EPS) -> torch.Tensor:
    """Zero-mean unit-variance per channel over the spatial dims."""
    mean = x.mean(dim=(-2, -1), keepdim=True)
    var = x.var(dim=(-2, -1), unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps)


class AdaIN(nn.Module):
    """Instance norm followed by a per-channel affine driven by the style code."""

    def __init__(self, channels: int, style_dim: int, generator: torch.Generator):
        super().__init__()
        self.affine = nn.Linear(style_dim, 2 * channels)
        with torch.no_grad():
            self.affine.weight.normal_(0.0, 1.0 / math.sqrt(style_dim), generator=generator)
            self.affine.bias.zero_()
            self.affine.bias[:channels] = 1.0  # start at identity scale

    def forward(self, x: torch.Tensor, w_s: torch.Tensor) -> torch.Tensor:
        scale, shift = self.affine(w_s).chunk(2, dim=-1)
        # per-channel broadcast over spatial dims (supports (C,H,W) and (B,C,H,W))
        if x.dim() == 4:
            scale = scale.reshape(1, -1, 1, 1)
            shift = shift.reshape(1, -1, 1, 1)
        else:
            scale = scale.reshape(-1, 1, 1)
            shift = shift.reshape(-1, 1, 1)
        return instance_normalize(x) * scale + shift


def _conv_init(conv: nn.Module, generator: torch.Generator) -> None:
    with torch.no_grad():
        fan_in = conv.weight.shape[1] * conv.weight.shape[2] * conv.weight.shape[3]
        std = math.sqrt(2.0 / (1 + 0.2 ** 2) / fan_in)
        conv.weight.normal_(0.0, std, generator=generator)
        if conv.bias is not None:
            conv.bias.zero_()


class _UpBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, style_dim: int, generator: torch.Generator):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.adain = AdaIN(c_out, style_dim, generator)
        _conv_init(self.conv, generator)

    def forward(self, x: torch.Tensor, w_s: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv(x)
        x = self.adain(x, w_s)
        return F.leaky_relu(x, 0.2)


class StyledDecoder(nn.Module):
    """Blueprint shared by the image (3ch, tanh) and semantic (19ch, logits)
    decoders; they differ only in head channel count and output bounding."""

    def __init__(self, cfg: ModelConfig, out_channels: int, bounded: bool,
                 generator: torch.Generator):
        super().__init__()
        self.out_channels = out_channels
        self.bounded = bounded
        chans = (cfg.feature_channels,) + tuple(cfg.decoder_channels)
        self.blocks = nn.ModuleList(
            [_UpBlock(chans[i], chans[i + 1], cfg.style_dim, generator)
             for i in range(len(chans) - 1)])
        self.heads = nn.ModuleList(
            [nn.Conv2d(c, out_channels, 1) for c in chans[1:]])
        for head in self.heads:
            _conv_init(head, generator)

    def forward_components(self, features: torch.Tensor, w_s: torch.Tensor):
        """Returns (raw multi-scale sum, per-scale head outputs)."""
        squeeze = features.dim() == 3
        x = features[None] if squeeze else features
        head_outs = []
        for block, head in zip(self.blocks, self.heads):
            x = block(x, w_s)
            head_outs.append(head(x))
        finest = head_outs[-1].shape[-2:]
        total = head_outs[-1].clone()
        for out in head_outs[:-1]:
            total = total + F.interpolate(out, size=finest, mode="bilinear",
                                          align_corners=False)
        if squeeze:
            total = total[0]
            head_outs = [h[0] for h in head_outs]
        return total, head_outs

    def forward(self, features: torch.Tensor, w_s: torch.Tensor) -> torch.Tensor:
        total, _ = self.forward_components(features, w_s)
        return torch.tanh(total) if self.bounded else total


def make_image_decoder(cfg: ModelConfig, generator: torch.Generator) -> StyledDecoder:
    return StyledDecoder(cfg, out_channels=3, bounded=True, generator=generator)


def make_semantic_decoder(cfg: ModelConfig, generator: torch.Generator) -> StyledDecoder:
    return StyledDecoder(cfg, out_channels=NUM_SEMANTIC_CLASSES, bounded=False,
                         generator=generator)


def normalize_semantics(logits: torch.Tensor) -> torch.Tensor:
    """Per-pixel softmax over the class channel; sums to 1 by construction."""
    dim = 0 if logits.dim() == 3 else 1
    return torch.softmax(logits, dim=dim)


def semantic_labels(semantics: torch.Tensor) -> torch.Tensor:
    """Argmax label map from logits or probabilities."""
    dim = 0 if semantics.dim() == 3 else 1
    return semantics.argmax(dim=dim)
