"""Read-only applications over trained checkpoints: semantic editing of
synthesized drawings, cross-model style transfer, and identity
interpolation in the post-mapping content space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image, ImageDraw

from .checkpoint import Checkpoint
from .config import NUM_SEMANTIC_CLASSES
from .decoders import normalize_semantics, semantic_labels
from .geometry import CameraPose, generate_rays
from .inference import generator_from_checkpoint, render_resolution
from .model import PortraitGenerator
from .projector import StyleParams


@dataclass
class EditOp:
    """Region edit on a semantic map: paint target_class ("set") or restore
    the unedited base ("clear") inside a polygon or boolean mask."""

    target_class: int
    mode: str = "set"
    polygon: list[tuple[float, float]] | None = None
    mask: torch.Tensor | None = None

    def __post_init__(self):
        if not (0 <= self.target_class < NUM_SEMANTIC_CLASSES):
            raise ValueError(f"class {self.target_class} outside 0..{NUM_SEMANTIC_CLASSES - 1}")
        if self.mode not in ("set", "clear"):
            raise ValueError(f"mode must be 'set' or 'clear', got {self.mode!r}")
        if (self.polygon is None) == (self.mask is None):
            raise ValueError("exactly one of polygon or mask must be given")
        if self.polygon is not None and len(self.polygon) < 3:
            raise ValueError("polygon needs at least 3 points")

    @classmethod
    def from_json_dict(cls, raw: dict) -> "EditOp":
        if "polygon" not in raw:
            raise ValueError("edit JSON must carry a 'polygon' field")
        poly = raw["polygon"]
        if (not isinstance(poly, list)
                or any(not isinstance(p, (list, tuple)) or len(p) != 2 for p in poly)):
            raise ValueError("polygon must be a list of [x, y] pairs")
        return cls(target_class=int(raw["class"]), mode=raw.get("mode", "set"),
                   polygon=[(float(x), float(y)) for x, y in poly])

    def to_json_dict(self) -> dict:
        if self.polygon is None:
            raise ValueError("mask-based edits have no JSON form")
        return {"polygon": [[x, y] for x, y in self.polygon],
                "class": self.target_class, "mode": self.mode}

    def region(self, shape: tuple[int, int]) -> torch.Tensor:
        h, w = shape
        if self.mask is not None:
            if self.mask.shape != (h, w):
                raise ValueError(f"edit mask {tuple(self.mask.shape)} outside bounds {(h, w)}")
            return self.mask.bool()
        canvas = Image.new("L", (w, h), 0)
        ImageDraw.Draw(canvas).polygon([(float(x), float(y)) for x, y in self.polygon],
                                       fill=1)
        return torch.from_numpy(np.asarray(canvas, dtype=bool))


def apply_edits(base_probs: torch.Tensor, edits: list[EditOp]) -> torch.Tensor:
    """Apply edits in order to a (19, H, W) probability map. Edited pixels
    become hard one-hot; cleared pixels revert to the base map."""
    edited = base_probs.clone()
    h, w = base_probs.shape[-2:]
    for op in edits:
        region = op.region((h, w))
        if not region.any():
            continue
        if op.mode == "set":
            onehot = torch.zeros(NUM_SEMANTIC_CLASSES, dtype=base_probs.dtype)
            onehot[op.target_class] = 1.0
            edited[:, region] = onehot[:, None]
        else:
            edited[:, region] = base_probs[:, region]
    return edited


@dataclass
class EditResult:
    drawing_original: torch.Tensor
    semantics_original: torch.Tensor
    semantics_edited: torch.Tensor
    drawing_edited: torch.Tensor
    labels_edited: torch.Tensor | None = None


def semantic_edit(ckpt: Checkpoint, z: torch.Tensor, pose: CameraPose,
                  edits: list[EditOp],
                  gen: PortraitGenerator | None = None) -> EditResult:
    """Generate, edit the semantic map, and re-run the translator on both
    the original and edited maps."""
    if gen is None:
        gen = generator_from_checkpoint(ckpt)
    if gen.translator is None:
        raise ValueError("semantic editing needs a translator-bearing (stage-2) checkpoint")
    resolution = render_resolution(ckpt.config, ckpt.stage)
    with torch.no_grad():
        out = gen.synthesize(z, pose, resolution)
        edited = apply_edits(out.semantics, edits)
        drawing_edited = gen.translator(out.photo, edited)
    return EditResult(drawing_original=out.drawing,
                      semantics_original=out.semantics,
                      semantics_edited=edited,
                      drawing_edited=drawing_edited,
                      labels_edited=semantic_labels(edited))


def style_transfer(ckpt_content: Checkpoint, ckpt_style: Checkpoint,
                   z1: torch.Tensor, z2: torch.Tensor,
                   pose: CameraPose) -> torch.Tensor:
    """Content features from model A under z1, style vector and decoders
    from model B under z2."""
    if ckpt_content.config.model != ckpt_style.config.model:
        raise ValueError("checkpoints have mismatched architecture hyperparameters")
    gen_content = generator_from_checkpoint(ckpt_content)
    gen_style = generator_from_checkpoint(ckpt_style)
    resolution = render_resolution(ckpt_content.config, ckpt_content.stage)
    with torch.no_grad():
        proj = gen_content.projector.project(z1, pose, resolution, mode="eval")
        w_s = gen_style.projector.mapping(z2).w_s
        return _decode_with(gen_style, proj.features, w_s)


def _decode_with(gen: PortraitGenerator, features: torch.Tensor,
                 w_s: torch.Tensor) -> torch.Tensor:
    photo = gen.image_decoder(features, w_s)
    probs = normalize_semantics(gen.semantic_decoder(features, w_s))
    return gen.translator(photo, probs) if gen.translator is not None else photo


def _lerp_style(a: StyleParams, b: StyleParams, t: float) -> StyleParams:
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    w_c = [((1.0 - t) * fa + t * fb, (1.0 - t) * pa + t * pb)
           for (fa, pa), (fb, pb) in zip(a.w_c, b.w_c)]
    return StyleParams(w_c=w_c, w_s=(1.0 - t) * a.w_s + t * b.w_s)


def _lerp_pose(a: CameraPose, b: CameraPose, t: float) -> CameraPose:
    if t == 0.0:
        return a
    if t == 1.0:
        return b

    def mix(x, y):
        return (1.0 - t) * x + t * y

    return CameraPose(yaw=mix(a.yaw, b.yaw), pitch=mix(a.pitch, b.pitch),
                      radius=mix(a.radius, b.radius), fov=mix(a.fov, b.fov),
                      near=mix(a.near, b.near), far=mix(a.far, b.far))


def _render_style(gen: PortraitGenerator, style: StyleParams, pose: CameraPose,
                  resolution: int) -> torch.Tensor:
    """Single-view decode from explicit style parameters; matches the
    eval-mode projection op for op, so endpoint frames are bit-exact."""
    rays = generate_rays(pose, (resolution, resolution),
                         dtype=gen.projector.sigma_head.weight.dtype)
    render = gen.projector.volume_render(rays, style.w_c, gen.projector.cfg.n_samples,
                                         pose.near, pose.far)
    return _decode_with(gen, render.features, style.w_s)


def identity_interpolate(ckpt: Checkpoint, z1: torch.Tensor, z2: torch.Tensor,
                         pose1: CameraPose, pose2: CameraPose,
                         steps: int) -> list[torch.Tensor]:
    """Linear interpolation of the post-mapping content/style parameters and
    the viewpoint; endpoints reproduce direct generation exactly."""
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    gen = generator_from_checkpoint(ckpt)
    resolution = render_resolution(ckpt.config, ckpt.stage)
    with torch.no_grad():
        style1 = gen.projector.mapping(z1)
        style2 = gen.projector.mapping(z2)
        frames = []
        for i in range(steps):
            t = i / (steps - 1)
            style = _lerp_style(style1, style2, t)
            pose = _lerp_pose(pose1, pose2, t)
            frames.append(_render_style(gen, style, pose, resolution))
    return frames
