"""Full generator: projector + decoders + optional domain translator.

Checkpoint tensor names follow the submodule layout here:
"projector.mapping.*", "projector.film.{i}.*", "decoder.image.*",
"decoder.semantic.*", "translator.*".
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import ModelConfig, PoseDistribution
from .decoders import (StyledDecoder, make_image_decoder, make_semantic_decoder,
                       normalize_semantics)
from .geometry import CameraPose
from .projector import FeatureProjector, ProjectionResult
from .translator import DomainTranslator


@dataclass
class SynthOutput:
    photo: torch.Tensor             # (3, 8R, 8R) in [-1, 1]
    semantics_logits: torch.Tensor  # (19, 8R, 8R)
    semantics: torch.Tensor         # per-pixel simplex
    drawing: torch.Tensor           # (3, 8R, 8R); photo passthrough without translator
    projection: ProjectionResult


class PortraitGenerator(nn.Module):
    def __init__(self, cfg: ModelConfig, generator: torch.Generator,
                 use_translator: bool = True, use_spade: bool = True):
        super().__init__()
        self.cfg = cfg
        self.projector = FeatureProjector(cfg, generator)
        self.decoder = nn.ModuleDict({
            "image": make_image_decoder(cfg, generator),
            "semantic": make_semantic_decoder(cfg, generator),
        })
        self.translator = (DomainTranslator(cfg, generator, use_spade=use_spade)
                           if use_translator else None)

    @property
    def image_decoder(self) -> StyledDecoder:
        return self.decoder["image"]

    @property
    def semantic_decoder(self) -> StyledDecoder:
        return self.decoder["semantic"]

    def synthesize(self, z: torch.Tensor, pose: CameraPose, resolution: int,
                   mode: str = "eval", generator: torch.Generator | None = None,
                   pose_dist: PoseDistribution | None = None,
                   detach_features: bool = False,
                   aux_pose: CameraPose | None = None) -> SynthOutput:
        """Full forward pass for one sample.

        detach_features cuts the graph at the projector outputs, which is
        how the frozen-projector refinement stage runs.
        """
        proj = self.projector.project(z, pose, resolution, mode=mode,
                                      generator=generator, pose_dist=pose_dist,
                                      aux_pose=aux_pose)
        feats, w_s = proj.features, proj.style.w_s
        if detach_features:
            feats = feats.detach()
            w_s = w_s.detach()
        logits = self.semantic_decoder(feats, w_s)
        probs = normalize_semantics(logits)
        photo = self.image_decoder(feats, w_s)
        drawing = self.translator(photo, probs) if self.translator is not None else photo
        return SynthOutput(photo=photo, semantics_logits=logits, semantics=probs,
                           drawing=drawing, projection=proj)
