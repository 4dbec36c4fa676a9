"""Two-stage adversarial training, ablation variants, augmentation, and the
glue between live models and checkpoints.

Stage one trains the projector and both decoders against the semantic and
image discriminators on photo/mask pairs, with the masked reconstruction
term tying the primary render to the warped auxiliary render. Stage two
loads that result, freezes every projector parameter (excluded from the
optimizer and detached in the forward pass), attaches the drawing
translator, and refines the decoders against the semantic and drawing
discriminators only. The end-to-end ablation trains everything jointly on
drawings from scratch.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from PIL import Image

from .adversaries import Discriminator
from .checkpoint import Checkpoint, save_checkpoint
from .config import TrainConfig
from .data import (DatasetRecord, PairedDataset, image_to_tensor, load_mask,
                   write_image, write_mask)
from .geometry import sample_viewpoint
from .losses import (d_loss, g_adversarial, reconstruction_loss, stage1_d_losses,
                     stage1_g_loss, stage2_losses)
from .model import PortraitGenerator


class NonFiniteLossError(RuntimeError):
    def __init__(self, message: str, dump_path: Path | None = None):
        super().__init__(message)
        self.dump_path = dump_path


def set_requires_grad(module: nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def build_generator(config: TrainConfig, stage: int) -> PortraitGenerator:
    """Deterministic model construction; stage 1 has no translator."""
    g = torch.Generator().manual_seed(config.seed)
    use_translator = config.ablation.use_translator and (stage != 1)
    return PortraitGenerator(config.model, g, use_translator=use_translator,
                             use_spade=config.ablation.use_spade)


def build_discriminators(config: TrainConfig, roles: tuple[str, ...]) -> dict[str, Discriminator]:
    res = config.max_image_resolution()
    out = {}
    for i, role in enumerate(roles):
        g = torch.Generator().manual_seed(config.seed + 1000 + 13 * i)
        out[role] = Discriminator(role, config.model, res, g)
    return out


def collect_params(gen: PortraitGenerator,
                   discs: dict[str, Discriminator]) -> dict[str, torch.Tensor]:
    params = {name: p for name, p in gen.named_parameters()}
    for role, d in discs.items():
        for name, p in d.named_parameters():
            params[f"disc.{role}.{name}"] = p
    return params


class _NamedAdam:
    """Adam wrapper that remembers parameter names so optimizer state can be
    checkpointed and restored by name."""

    def __init__(self, named: list[tuple[str, torch.Tensor]], lr: float,
                 betas: tuple[float, float]):
        self.names = [n for n, _ in named]
        self.params = [p for _, p in named]
        self.opt = torch.optim.Adam(self.params, lr=lr, betas=betas)

    def set_lr(self, lr: float) -> None:
        for group in self.opt.param_groups:
            group["lr"] = lr

    def step(self) -> None:
        self.opt.step()

    def zero_grad(self) -> None:
        self.opt.zero_grad(set_to_none=True)

    def state_tensors(self, prefix: str) -> dict[str, torch.Tensor]:
        out = {}
        for name, p in zip(self.names, self.params):
            for key, value in self.opt.state.get(p, {}).items():
                t = value if torch.is_tensor(value) else torch.tensor(value)
                out[f"{prefix}.{name}.{key}"] = t
        return out

    def load_state_tensors(self, tensors: dict[str, torch.Tensor], prefix: str) -> None:
        for name, p in zip(self.names, self.params):
            state = {}
            for key in ("step", "exp_avg", "exp_avg_sq"):
                full = f"{prefix}.{name}.{key}"
                if full in tensors:
                    state[key] = tensors[full].clone()
            if state:
                self.opt.state[p] = state


@dataclass
class _RunLog:
    path: Path | None
    rows: list[tuple[int, str, float]]

    @classmethod
    def create(cls, out_dir: Path | None) -> "_RunLog":
        path = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / "metrics.csv"
            if not path.exists():  # stages sharing a run dir append
                with open(path, "w", newline="") as fh:
                    csv.writer(fh).writerow(["step", "name", "value"])
        return cls(path=path, rows=[])

    def log(self, step: int, name: str, value: float) -> None:
        self.rows.append((step, name, value))
        if self.path is not None:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh).writerow([step, name, value])


class _Sampler:
    """Seed-deterministic shuffled index stream over a dataset."""

    def __init__(self, n: int, generator: torch.Generator):
        self.n = n
        self.generator = generator
        self.queue: list[int] = []

    def take(self, k: int) -> list[int]:
        while len(self.queue) < k:
            self.queue.extend(torch.randperm(self.n, generator=self.generator).tolist())
        out, self.queue = self.queue[:k], self.queue[k:]
        return out


def _check_finite(components: dict[str, float], stage: int, step: int,
                  out_dir: Path | None) -> None:
    if all(math.isfinite(v) for v in components.values()):
        return
    dump_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_path = out_dir / f"diverged_stage{stage}_step{step}.json"
        dump_path.write_text(json.dumps(
            {"stage": stage, "step": step, "components": components}, indent=1))
    raise NonFiniteLossError(
        f"non-finite loss at stage {stage} step {step}: {components}", dump_path)


def make_checkpoint(config: TrainConfig, gen: PortraitGenerator,
                    discs: dict[str, Discriminator],
                    optimizers: dict[str, _NamedAdam],
                    stage: int, step: int, frozen: list[str]) -> Checkpoint:
    params = {n: p.detach().clone() for n, p in collect_params(gen, discs).items()}
    optim: dict[str, torch.Tensor] = {}
    for prefix, opt in optimizers.items():
        optim.update(opt.state_tensors(prefix))
    return Checkpoint(params=params, optim=optim, stage=stage, step=step,
                      config=config, frozen=frozen)


def load_into_modules(ckpt: Checkpoint, gen: PortraitGenerator,
                      discs: dict[str, Discriminator], strict: bool = False) -> None:
    """Copy checkpoint tensors into live modules; keys absent from the
    checkpoint keep their fresh initialization."""
    live = collect_params(gen, discs)
    buffers = dict(gen.named_buffers())
    for name, value in ckpt.params.items():
        if name in live:
            with torch.no_grad():
                live[name].copy_(value)
        elif name in buffers:
            with torch.no_grad():
                buffers[name].copy_(value)
        elif strict:
            raise KeyError(f"checkpoint tensor {name} has no destination")


def _synthesize_batch(gen: PortraitGenerator, config: TrainConfig, resolution: int,
                      batch_size: int, rng: torch.Generator, mode: str,
                      detach_features: bool = False):
    outs = []
    for _ in range(batch_size):
        z = torch.randn(config.model.z_dim, generator=rng)
        pose = sample_viewpoint(rng, config.poses)
        outs.append(gen.synthesize(z, pose, resolution, mode=mode, generator=rng,
                                   pose_dist=config.poses,
                                   detach_features=detach_features))
    return outs


def _stack(outs, attr):
    return torch.stack([getattr(o, attr) for o in outs])


def _simplex_error(probs: torch.Tensor) -> float:
    return (probs.sum(dim=-3) - 1.0).abs().max().item()


def train_stage1(config: TrainConfig, dataset: PairedDataset,
                 out_dir: str | Path | None = None,
                 resume: Checkpoint | None = None) -> Checkpoint:
    """Alternating D/G training on photo/mask pairs over the progressive
    schedule. Returns (and writes, when out_dir is given) a checkpoint at
    every schedule boundary."""
    config.validate()
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    out_dir = Path(out_dir) if out_dir is not None else None

    gen = build_generator(config, stage=1)
    discs = build_discriminators(config, ("semantic", "image"))
    d_s, d_i = discs["semantic"], discs["image"]

    g_named = list(gen.named_parameters())
    d_named = ([(f"disc.semantic.{n}", p) for n, p in d_s.named_parameters()]
               + [(f"disc.image.{n}", p) for n, p in d_i.named_parameters()])
    betas = (config.adam_beta1, config.adam_beta2)
    first = config.stage1[0]
    opt_g = _NamedAdam(g_named, first.g_lr, betas)
    opt_d = _NamedAdam(d_named, first.d_lr, betas)
    optimizers = {"adam_g": opt_g, "adam_d": opt_d}

    rng = torch.Generator().manual_seed(config.seed + 1)
    global_step = 0
    if resume is not None:
        load_into_modules(resume, gen, discs)
        opt_g.load_state_tensors(resume.optim, "adam_g")
        opt_d.load_state_tensors(resume.optim, "adam_d")
        global_step = resume.step

    log = _RunLog.create(out_dir)
    sampler = _Sampler(len(dataset), rng)
    ckpt = make_checkpoint(config, gen, discs, optimizers, 1, global_step, [])
    target = 0
    for entry in config.stage1:
        opt_g.set_lr(entry.g_lr)
        opt_d.set_lr(entry.d_lr)
        for _ in range(entry.steps):
            target += 1
            if target <= global_step:
                continue  # already covered by the resumed checkpoint
            global_step = target
            _stage1_step(config, gen, d_s, d_i, dataset, sampler, entry,
                         opt_g, opt_d, rng, global_step, log, out_dir)
        ckpt = make_checkpoint(config, gen, discs, optimizers, 1, global_step, [])
        if out_dir is not None:
            save_checkpoint(ckpt, out_dir / "stage1" / f"step{global_step}")
    return ckpt


def _stage1_step(config, gen, d_s, d_i, dataset, sampler, entry, opt_g, opt_d,
                 rng, step, log, out_dir):
    idxs = sampler.take(entry.batch_size)
    photos, onehots = dataset.batch(idxs, entry.image_resolution)

    # Discriminator update: fakes are produced without a generator graph.
    with torch.no_grad():
        fakes = _synthesize_batch(gen, config, entry.resolution, entry.batch_size,
                                  rng, mode="train")
    d_losses = stage1_d_losses(d_s, d_i, onehots, photos,
                               _stack(fakes, "semantics"), _stack(fakes, "photo"),
                               config.losses)
    opt_d.zero_grad()
    (d_losses.semantic + d_losses.image).backward()
    opt_d.step()
    opt_d.zero_grad()

    # Generator update; discriminators take no gradient.
    set_requires_grad(d_s, False)
    set_requires_grad(d_i, False)
    outs = _synthesize_batch(gen, config, entry.resolution, entry.batch_size,
                             rng, mode="train")
    rgb_pri = torch.stack([o.projection.rgb_pri for o in outs])
    rgb_warp = torch.stack([o.projection.rgb_warp for o in outs])
    masks = torch.stack([o.projection.validity for o in outs])
    g_parts = stage1_g_loss(d_s, d_i, _stack(outs, "semantics"), _stack(outs, "photo"),
                            rgb_pri, rgb_warp, masks, config.losses)
    opt_g.zero_grad()
    g_parts.total.backward()
    opt_g.step()
    opt_g.zero_grad()
    set_requires_grad(d_s, True)
    set_requires_grad(d_i, True)

    components = {
        "d_semantic": d_losses.semantic.item(),
        "d_image": d_losses.image.item(),
        "g_adv_semantic": g_parts.adv_semantic.item(),
        "g_adv_image": g_parts.adv_image.item(),
        "g_rec": g_parts.rec.item(),
        "g_total": g_parts.total.item(),
        "semantic_simplex_err": _simplex_error(_stack(outs, "semantics")),
    }
    for name, value in components.items():
        log.log(step, name, value)
    _check_finite(components, 1, step, out_dir)


def train_stage2(config: TrainConfig, stage1_ckpt: Checkpoint,
                 dataset: PairedDataset,
                 out_dir: str | Path | None = None) -> Checkpoint:
    """Frozen-projector refinement on drawing/mask pairs. The drawing
    translator and drawing discriminator start fresh; the semantic
    discriminator is warm-started from the stage-1 checkpoint."""
    config.validate()
    if stage1_ckpt is None:
        raise ValueError("stage 2 requires a stage-1 checkpoint")
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if not config.stage2:
        raise ValueError("stage2 schedule is empty")
    out_dir = Path(out_dir) if out_dir is not None else None

    gen = build_generator(config, stage=2)
    discs = build_discriminators(config, ("semantic", "drawing"))
    d_s, d_p = discs["semantic"], discs["drawing"]
    load_into_modules(stage1_ckpt, gen, {"semantic": d_s})

    frozen = [n for n, _ in gen.named_parameters() if n.startswith("projector.")]
    for name, p in gen.named_parameters():
        if name.startswith("projector."):
            p.requires_grad_(False)

    g_named = [(n, p) for n, p in gen.named_parameters()
               if not n.startswith("projector.")]
    d_named = ([(f"disc.semantic.{n}", p) for n, p in d_s.named_parameters()]
               + [(f"disc.drawing.{n}", p) for n, p in d_p.named_parameters()])
    betas = (config.adam_beta1, config.adam_beta2)
    first = config.stage2[0]
    opt_g = _NamedAdam(g_named, first.g_lr, betas)
    opt_d = _NamedAdam(d_named, first.d_lr, betas)
    optimizers = {"adam_g": opt_g, "adam_d": opt_d}

    rng = torch.Generator().manual_seed(config.seed + 2)
    log = _RunLog.create(out_dir)
    sampler = _Sampler(len(dataset), rng)
    global_step = 0
    ckpt = make_checkpoint(config, gen, discs, optimizers, 2, global_step, frozen)
    for entry in config.stage2:
        opt_g.set_lr(entry.g_lr)
        opt_d.set_lr(entry.d_lr)
        for _ in range(entry.steps):
            global_step += 1
            _stage2_step(config, gen, d_s, d_p, dataset, sampler, entry,
                         opt_g, opt_d, rng, global_step, log, out_dir)
        ckpt = make_checkpoint(config, gen, discs, optimizers, 2, global_step, frozen)
        if out_dir is not None:
            save_checkpoint(ckpt, out_dir / "stage2" / f"step{global_step}")
    return ckpt


def _stage2_step(config, gen, d_s, d_p, dataset, sampler, entry, opt_g, opt_d,
                 rng, step, log, out_dir):
    idxs = sampler.take(entry.batch_size)
    drawings, onehots = dataset.batch(idxs, entry.image_resolution)

    with torch.no_grad():
        fakes = _synthesize_batch(gen, config, entry.resolution, entry.batch_size,
                                  rng, mode="eval", detach_features=True)
    losses_d = stage2_losses(d_p, d_s, drawings, _stack(fakes, "drawing"),
                             _stack(fakes, "semantics"), config.losses)
    loss_ds = d_loss(d_s, onehots, _stack(fakes, "semantics"), config.losses.r1)
    opt_d.zero_grad()
    (losses_d.d_drawing + loss_ds).backward()
    opt_d.step()
    opt_d.zero_grad()

    set_requires_grad(d_s, False)
    set_requires_grad(d_p, False)
    outs = _synthesize_batch(gen, config, entry.resolution, entry.batch_size,
                             rng, mode="eval", detach_features=True)
    g_losses = stage2_losses(d_p, d_s, drawings, _stack(outs, "drawing"),
                             _stack(outs, "semantics"), config.losses)
    opt_g.zero_grad()
    g_losses.g_total.backward()
    opt_g.step()
    opt_g.zero_grad()
    set_requires_grad(d_s, True)
    set_requires_grad(d_p, True)

    components = {
        "d_drawing": losses_d.d_drawing.item(),
        "d_semantic": loss_ds.item(),
        "g_total": g_losses.g_total.item(),
        "semantic_simplex_err": _simplex_error(_stack(outs, "semantics")),
    }
    for name, value in components.items():
        log.log(step, name, value)
    _check_finite(components, 2, step, out_dir)


def train_end_to_end(config: TrainConfig, dataset: PairedDataset,
                     out_dir: str | Path | None = None) -> Checkpoint:
    """Single-stage joint training on drawings (ablation baseline). All
    modules update together; no stage-1 checkpoint is involved."""
    config.validate()
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    out_dir = Path(out_dir) if out_dir is not None else None
    schedule = config.stage2 or config.stage1

    g = torch.Generator().manual_seed(config.seed)
    gen = PortraitGenerator(config.model, g,
                            use_translator=config.ablation.use_translator,
                            use_spade=config.ablation.use_spade)
    discs = build_discriminators(config, ("semantic", "drawing"))
    d_s, d_p = discs["semantic"], discs["drawing"]

    g_named = list(gen.named_parameters())
    d_named = ([(f"disc.semantic.{n}", p) for n, p in d_s.named_parameters()]
               + [(f"disc.drawing.{n}", p) for n, p in d_p.named_parameters()])
    betas = (config.adam_beta1, config.adam_beta2)
    opt_g = _NamedAdam(g_named, schedule[0].g_lr, betas)
    opt_d = _NamedAdam(d_named, schedule[0].d_lr, betas)
    optimizers = {"adam_g": opt_g, "adam_d": opt_d}

    rng = torch.Generator().manual_seed(config.seed + 3)
    log = _RunLog.create(out_dir)
    sampler = _Sampler(len(dataset), rng)
    global_step = 0
    ckpt = make_checkpoint(config, gen, discs, optimizers, 2, 0, [])
    for entry in schedule:
        opt_g.set_lr(entry.g_lr)
        opt_d.set_lr(entry.d_lr)
        for _ in range(entry.steps):
            global_step += 1
            idxs = sampler.take(entry.batch_size)
            drawings, onehots = dataset.batch(idxs, entry.image_resolution)
            with torch.no_grad():
                fakes = _synthesize_batch(gen, config, entry.resolution,
                                          entry.batch_size, rng, mode="train")
            loss_dp = d_loss(d_p, drawings, _stack(fakes, "drawing"), config.losses.r1)
            loss_ds = d_loss(d_s, onehots, _stack(fakes, "semantics"), config.losses.r1)
            opt_d.zero_grad()
            (loss_dp + loss_ds).backward()
            opt_d.step()
            opt_d.zero_grad()

            set_requires_grad(d_s, False)
            set_requires_grad(d_p, False)
            outs = _synthesize_batch(gen, config, entry.resolution,
                                     entry.batch_size, rng, mode="train")
            rec = reconstruction_loss(
                torch.stack([o.projection.rgb_pri for o in outs]),
                torch.stack([o.projection.rgb_warp for o in outs]),
                torch.stack([o.projection.validity for o in outs]), config.losses)
            g_total = (g_adversarial(d_s(_stack(outs, "semantics")))
                       + g_adversarial(d_p(_stack(outs, "drawing")))
                       + config.losses.rec * rec)
            opt_g.zero_grad()
            g_total.backward()
            opt_g.step()
            opt_g.zero_grad()
            set_requires_grad(d_s, True)
            set_requires_grad(d_p, True)

            components = {"d_drawing": loss_dp.item(), "d_semantic": loss_ds.item(),
                          "g_rec": rec.item(), "g_total": g_total.item(),
                          "semantic_simplex_err": _simplex_error(_stack(outs, "semantics"))}
            for name, value in components.items():
                log.log(global_step, name, value)
            _check_finite(components, 2, global_step, out_dir)
        ckpt = make_checkpoint(config, gen, discs, optimizers, 2, global_step, [])
        if out_dir is not None:
            save_checkpoint(ckpt, out_dir / "end_to_end" / f"step{global_step}")
    return ckpt


def run_ablation(config: TrainConfig, photo_dataset: PairedDataset | None,
                 drawing_dataset: PairedDataset,
                 out_dir: str | Path | None = None) -> Checkpoint:
    """Dispatch one ablation-grid configuration end to end."""
    if config.ablation.end_to_end:
        return train_end_to_end(config, drawing_dataset, out_dir)
    if photo_dataset is None:
        raise ValueError("two-stage ablation needs a photo dataset")
    ckpt1 = train_stage1(config, photo_dataset, out_dir)
    return train_stage2(config, ckpt1, drawing_dataset, out_dir)


def augment_dataset(records: list[DatasetRecord], stylizer,
                    out_dir: str | Path) -> tuple[list[DatasetRecord], dict]:
    """Map every photo through the stylizer into a drawing dataset.

    Masks pass through unchanged. Records whose stylized output does not
    match the input shape are skipped and counted. A manifest recording the
    stylizer identity and counts is written next to the outputs.
    """
    out_dir = Path(out_dir)
    drawing_dir = out_dir / "drawings"
    mask_dir = out_dir / "masks"
    drawing_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)

    out_records = []
    skipped = 0
    for rec in records:
        image = image_to_tensor(Image.open(rec.image_path))
        styled = stylizer(image)
        if not torch.is_tensor(styled) or styled.shape != image.shape:
            skipped += 1
            continue
        drawing_path = drawing_dir / rec.image_path.name
        mask_path = mask_dir / rec.mask_path.name
        write_image(styled, drawing_path)
        write_mask(load_mask(rec.mask_path), mask_path)
        out_records.append(DatasetRecord(drawing_path, mask_path, rec.split))

    manifest = {
        "stylizer_id": getattr(stylizer, "stylizer_id", repr(stylizer)),
        "input_count": len(records),
        "output_count": len(out_records),
        "skipped": skipped,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out_records, manifest
