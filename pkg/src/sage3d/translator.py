"""Photo-to-drawing domain translator.

A U-Net maps the decoded photo to a portrait drawing. The synthesized
semantic map steers the result through spatially-adaptive normalization,
applied only at the two coarsest decoder scales so unreliable fine-grained
semantics cannot scramble stroke detail. Constructing with use_spade=False
yields a plain U-Net with zero semantic-conditioning parameters.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import NUM_SEMANTIC_CLASSES, ModelConfig
from .decoders import instance_normalize

SPADE_EPS = 1e-5
SPADE_HIDDEN = 32


def coerce_semantic_input(semantics: torch.Tensor, num_classes: int = NUM_SEMANTIC_CLASSES
                          ) -> torch.Tensor:
    """Accept (19,H,W)/(B,19,H,W) probability maps or (H,W)/(B,H,W) label
    maps; labels are one-hot encoded."""
    if semantics.dim() in (2, 3) and (semantics.dim() == 2
                                      or semantics.shape[0] != num_classes):
        labels = semantics.long()
        if labels.min() < 0 or labels.max() >= num_classes:
            raise ValueError(f"label values must lie in 0..{num_classes - 1}")
        onehot = F.one_hot(labels, num_classes).movedim(-1, -3)
        return onehot.float()
    return semantics


class Spade(nn.Module):
    """Instance-normalize, then scale/shift with maps convolved from the
    semantic layout (resized nearest to the feature resolution)."""

    def __init__(self, channels: int, generator: torch.Generator,
                 label_channels: int = NUM_SEMANTIC_CLASSES):
        super().__init__()
        self.shared = nn.Conv2d(label_channels, SPADE_HIDDEN, 3, padding=1)
        self.gamma = nn.Conv2d(SPADE_HIDDEN, channels, 3, padding=1)
        self.beta = nn.Conv2d(SPADE_HIDDEN, channels, 3, padding=1)
        with torch.no_grad():
            for conv in (self.shared, self.gamma, self.beta):
                fan_in = conv.weight.shape[1] * 9
                conv.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=generator)
                conv.bias.zero_()
            # keep early modulation gentle
            self.gamma.weight *= 0.1
            self.beta.weight *= 0.1

    def forward(self, x: torch.Tensor, semantics: torch.Tensor) -> torch.Tensor:
        seg = F.interpolate(semantics, size=x.shape[-2:], mode="nearest")
        hidden = F.relu(self.shared(seg))
        normalized = instance_normalize(x, eps=SPADE_EPS)
        return normalized * (1.0 + self.gamma(hidden)) + self.beta(hidden)


def _init_conv(conv: nn.Conv2d, generator: torch.Generator) -> None:
    with torch.no_grad():
        fan_in = conv.weight.shape[1] * conv.weight.shape[2] * conv.weight.shape[3]
        conv.weight.normal_(0.0, math.sqrt(2.0 / (1 + 0.2 ** 2) / fan_in),
                            generator=generator)
        conv.bias.zero_()


class DomainTranslator(nn.Module):
    """U-Net of depth 5 (four 2x downsamplings); semantic modulation at the
    1/16 and 1/8 decoder scales when enabled."""

    def __init__(self, cfg: ModelConfig, generator: torch.Generator,
                 use_spade: bool = True):
        super().__init__()
        b = cfg.translator_base
        self.use_spade = use_spade
        enc_chans = [3, b, 2 * b, 4 * b, 8 * b, 8 * b]
        self.encoders = nn.ModuleList()
        for i in range(5):
            stride = 1 if i == 0 else 2
            conv = nn.Conv2d(enc_chans[i], enc_chans[i + 1], 3, stride=stride, padding=1)
            _init_conv(conv, generator)
            self.encoders.append(conv)

        # decoder works back up: scales 1/16 -> 1/8 -> 1/4 -> 1/2 -> 1
        dec_in = [8 * b + 8 * b, 8 * b + 4 * b, 4 * b + 2 * b, 2 * b + b]
        dec_out = [8 * b, 4 * b, 2 * b, b]
        self.decoders = nn.ModuleList()
        for c_in, c_out in zip(dec_in, dec_out):
            conv = nn.Conv2d(c_in, c_out, 3, padding=1)
            _init_conv(conv, generator)
            self.decoders.append(conv)
        if use_spade:
            self.spade_bottleneck = Spade(8 * b, generator)
            self.spade_eighth = Spade(8 * b, generator)
        self.final = nn.Conv2d(b, 3, 3, padding=1)
        _init_conv(self.final, generator)

    def forward(self, image: torch.Tensor, semantics: torch.Tensor) -> torch.Tensor:
        squeeze = image.dim() == 3
        x = image[None] if squeeze else image
        seg = coerce_semantic_input(semantics).to(x.dtype)
        if seg.dim() == 3:
            seg = seg[None]
        if seg.shape[-2:] != x.shape[-2:]:
            raise ValueError(
                f"semantics {tuple(seg.shape[-2:])} misaligned with image {tuple(x.shape[-2:])}")
        if x.shape[-3] != 3:
            raise ValueError("translator expects a 3-channel image")

        skips = []
        for enc in self.encoders:
            x = F.leaky_relu(enc(x), 0.2)
            skips.append(x)

        x = skips[-1]
        if self.use_spade:
            x = self.spade_bottleneck(x, seg)
        for i, dec in enumerate(self.decoders):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = torch.cat([x, skips[-2 - i]], dim=1)
            x = F.relu(dec(x))
            if self.use_spade and i == 0:
                x = self.spade_eighth(x, seg)
        out = torch.tanh(self.final(x))
        return out[0] if squeeze else out

    def affected_bbox(self, edit_bbox: tuple[int, int, int, int],
                      image_hw: tuple[int, int]) -> tuple[int, int, int, int]:
        """Over-approximate the output region a semantic edit can reach.

        Mirrors the layer stack: the edit enters at the 1/16 and 1/8
        scales, is dilated by the modulation and decoder convs, and doubles
        per upsampling. Returns (r0, r1, c0, c1) clamped to the image.
        Feature-statistics coupling can still leak a small global offset;
        callers compare against a leakage bound outside this box.
        """
        h, w = image_hw
        r0, r1, c0, c1 = edit_bbox

        def span_at(scale: int) -> tuple[int, int, int, int]:
            # nearest-resize bounding box at 1/scale, +2 for the two 3x3
            # modulation convs
            return (r0 // scale - 2, r1 // scale + 2, c0 // scale - 2, c1 // scale + 2)

        a0, a1, b0, b1 = span_at(16)
        a0, a1, b0, b1 = a0 - 1, a1 + 1, b0 - 1, b1 + 1  # decoder conv at 1/16
        # upsample to 1/8 and merge the direct 1/8 entry point
        a0, a1, b0, b1 = 2 * a0, 2 * a1 + 1, 2 * b0, 2 * b1 + 1
        e0, e1, f0, f1 = span_at(8)
        a0, a1, b0, b1 = min(a0, e0), max(a1, e1), min(b0, f0), max(b1, f1)
        a0, a1, b0, b1 = a0 - 1, a1 + 1, b0 - 1, b1 + 1  # decoder conv at 1/8
        for _ in range(3):  # 1/4, 1/2, 1/1 decoder levels
            a0, a1, b0, b1 = 2 * a0 - 1, 2 * a1 + 2, 2 * b0 - 1, 2 * b1 + 2
        a0, a1, b0, b1 = a0 - 1, a1 + 1, b0 - 1, b1 + 1  # final conv
        return (max(a0, 0), min(a1, h - 1), max(b0, 0), min(b1, w - 1))
