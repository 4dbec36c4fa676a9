"""Training objectives.

Both adversarial stages use the non-saturating logistic form: each
discriminator minimizes softplus(-D(real)) + softplus(D(fake)) plus a
weighted gradient penalty, and the generator minimizes softplus(-D(fake)).
The score transform f(u) = -log(1 + exp(-u)) = -softplus(-u) is kept
explicit because several identities are asserted against it. Stage one adds
a masked reconstruction term mixing L1 with DSSIM between the primary
low-res render and the warped auxiliary render; stage two drops the image
discriminator and the reconstruction term entirely.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import torch
import torch.nn.functional as F

from .adversaries import r1_penalty
from .config import LossWeights

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def f_transform(u: torch.Tensor) -> torch.Tensor:
    """f(u) = -log(1 + exp(-u)), evaluated without overflow for large |u|."""
    if not torch.is_tensor(u):
        u = torch.as_tensor(u, dtype=torch.float64)
    return -F.softplus(-u)


def _gaussian_window(dtype: torch.dtype) -> torch.Tensor:
    half = (SSIM_WINDOW - 1) / 2.0
    coords = torch.arange(SSIM_WINDOW, dtype=dtype) - half
    g = torch.exp(-(coords ** 2) / (2.0 * SSIM_SIGMA ** 2))
    g = g / g.sum()
    return g[:, None] * g[None, :]


def ssim_map(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Windowed SSIM map (valid convolution, 11x11 Gaussian window).

    Inputs are (C, H, W) or (B, C, H, W) in [-1, 1]; they are rescaled to
    [0, 1] internally so the stabilizer constants use dynamic range 1.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    squeeze = a.dim() == 3
    if squeeze:
        a, b = a[None], b[None]
    _, c, h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}px, got {h}x{w}")

    a = (a + 1.0) / 2.0
    b = (b + 1.0) / 2.0
    kernel = _gaussian_window(a.dtype).expand(c, 1, SSIM_WINDOW, SSIM_WINDOW)

    def blur(x):
        return F.conv2d(x, kernel, groups=c)

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    out = num / den
    return out[0] if squeeze else out


def ssim(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean structural similarity in [-1, 1]; 1 exactly at identity."""
    return ssim_map(a, b).mean()


def reconstruction_loss(pri: torch.Tensor, target: torch.Tensor,
                        mask: torch.Tensor | None, w: LossWeights) -> torch.Tensor:
    """l1_mix * masked L1 + (1 - l1_mix) * masked DSSIM, DSSIM = (1-SSIM)/2.

    mask is a (H, W) boolean validity map (None means all valid). An empty
    mask contributes nothing and returns 0 with a warning.
    """
    if pri.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pri.shape)} vs {tuple(target.shape)}")
    if mask is None:
        mask = torch.ones(pri.shape[:-3] + pri.shape[-2:], dtype=torch.bool,
                          device=pri.device)
    if mask.sum() == 0:
        warnings.warn("reconstruction mask is empty; returning 0", RuntimeWarning)
        return torch.zeros((), dtype=pri.dtype, device=pri.device)

    maskf = mask.to(pri.dtype).unsqueeze(-3)  # broadcast over channels
    n_channels = pri.shape[-3]
    l1 = ((pri - target).abs() * maskf).sum() / (maskf.sum() * n_channels)

    crop = (SSIM_WINDOW - 1) // 2
    mask_core = maskf[..., crop:-crop, crop:-crop]
    if mask_core.sum() == 0:
        dssim = torch.zeros((), dtype=pri.dtype, device=pri.device)
    else:
        smap = ssim_map(pri, target)
        dmap = (1.0 - smap) / 2.0
        dssim = (dmap * mask_core).sum() / (mask_core.sum() * n_channels)
    return w.l1_mix * l1 + (1.0 - w.l1_mix) * dssim


def d_adversarial(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    return F.softplus(-real_scores).mean() + F.softplus(fake_scores).mean()


def g_adversarial(fake_scores: torch.Tensor) -> torch.Tensor:
    return F.softplus(-fake_scores).mean()


def d_loss(d, real_batch: torch.Tensor, fake_batch: torch.Tensor,
           r1_weight: float) -> torch.Tensor:
    """Full discriminator objective for one discriminator."""
    loss = d_adversarial(d(real_batch), d(fake_batch.detach()))
    if r1_weight > 0:
        loss = loss + r1_weight * r1_penalty(d, real_batch)
    return loss


class Stage1DLosses(NamedTuple):
    semantic: torch.Tensor
    image: torch.Tensor


class Stage1GLoss(NamedTuple):
    total: torch.Tensor
    adv_semantic: torch.Tensor
    adv_image: torch.Tensor
    rec: torch.Tensor


class Stage2Losses(NamedTuple):
    d_drawing: torch.Tensor
    g_total: torch.Tensor


def stage1_d_losses(d_s, d_i, real_semantics, real_images,
                    fake_semantics, fake_images, w: LossWeights) -> Stage1DLosses:
    """Losses for the semantic and image discriminators. Fakes must be
    detached from the generator graph by the caller or are detached here."""
    return Stage1DLosses(
        semantic=d_loss(d_s, real_semantics, fake_semantics, w.r1),
        image=d_loss(d_i, real_images, fake_images, w.r1),
    )


def stage1_g_loss(d_s, d_i, fake_semantics, fake_images,
                  rgb_pri, rgb_target, mask, w: LossWeights) -> Stage1GLoss:
    adv_s = g_adversarial(d_s(fake_semantics))
    adv_i = g_adversarial(d_i(fake_images))
    rec = reconstruction_loss(rgb_pri, rgb_target, mask, w)
    return Stage1GLoss(total=adv_s + adv_i + w.rec * rec,
                       adv_semantic=adv_s, adv_image=adv_i, rec=rec)


def stage2_losses(d_p, d_s, real_drawings, fake_drawings,
                  fake_semantics, w: LossWeights) -> Stage2Losses:
    """Drawing-discriminator loss and the stage-two generator loss. The
    image discriminator and the reconstruction term do not appear."""
    d_drawing = d_loss(d_p, real_drawings, fake_drawings, w.r1)
    g_total = g_adversarial(d_s(fake_semantics)) + g_adversarial(d_p(fake_drawings))
    return Stage2Losses(d_drawing=d_drawing, g_total=g_total)
