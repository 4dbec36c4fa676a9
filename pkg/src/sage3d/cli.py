"""Command-line entry points.

Exit codes: 0 success, 2 usage/config errors, 3 numeric failure (training
aborted on a non-finite loss). Every run writes a manifest.json with the
command, seed, and a config content hash so it can be reproduced.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import click
import torch

from . import applications, metrics as metrics_mod
from .checkpoint import Checkpoint, load_checkpoint
from .config import ConfigError, TrainConfig, config_hash, load_config
from .data import (PairedDataset, discover_records, image_to_tensor, write_image,
                   write_mask)
from .decoders import semantic_labels
from .inference import (generator_from_checkpoint, latent_from_seed,
                        pose_from_config, render_resolution)
from .stylize import get_stylizer
from .training import (NonFiniteLossError, augment_dataset, run_ablation,
                       train_stage1, train_stage2)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _apply_env() -> None:
    device = os.environ.get("SAGE_DEVICE")
    if device:
        torch.set_default_device(device)
    if os.environ.get("SAGE_DETERMINISTIC") == "1":
        torch.use_deterministic_algorithms(True)


def _write_manifest(out_dir: Path, command: str, config_path: str | None,
                    seed: int | None, cfg: TrainConfig | None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "seed": seed,
        "config_sha256": config_hash(cfg) if cfg is not None else None,
        "output_dir": str(out_dir),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))


def _load_config_or_exit(path: str) -> TrainConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_USAGE)


def _load_ckpt_or_exit(path: str) -> Checkpoint:
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        click.echo(f"checkpoint not found: {path}", err=True)
        raise SystemExit(EXIT_USAGE)


@click.group()
def main() -> None:
    """Multi-view portrait drawing synthesis toolkit."""
    _apply_env()


@main.command()
@click.option("--config", "config_path", required=True, type=str)
@click.option("--stage", type=click.Choice(["1", "2"]), required=True)
@click.option("--resume", "resume_path", type=str, default=None)
@click.option("--ablation", "ablation_flags", type=str, default=None,
              help="comma-separated: end_to_end,no_translator,no_spade")
@click.option("--data", "data_dir", required=True, type=str,
              help="dataset root with photos|drawings/ and masks/")
@click.option("--out", "out_dir", required=True, type=str)
def train(config_path, stage, resume_path, ablation_flags, data_dir, out_dir) -> None:
    """Run one training stage (or a full ablation variant)."""
    cfg = _load_config_or_exit(config_path)
    if ablation_flags:
        flags = {f.strip() for f in ablation_flags.split(",") if f.strip()}
        unknown = flags - {"end_to_end", "no_translator", "no_spade"}
        if unknown:
            click.echo(f"unknown ablation flags: {sorted(unknown)}", err=True)
            raise SystemExit(EXIT_USAGE)
        cfg.ablation.end_to_end = "end_to_end" in flags
        cfg.ablation.use_translator = "no_translator" not in flags
        cfg.ablation.use_spade = "no_spade" not in flags

    out = Path(out_dir)
    dataset = PairedDataset.from_dir(data_dir)
    _write_manifest(out, "train", config_path, cfg.seed, cfg)
    try:
        if cfg.ablation.end_to_end:
            run_ablation(cfg, None, dataset, out)
        elif stage == "1":
            resume = _load_ckpt_or_exit(resume_path) if resume_path else None
            train_stage1(cfg, dataset, out, resume=resume)
        else:
            if not resume_path:
                click.echo("--stage 2 requires --resume with a stage-1 checkpoint "
                           "(or --ablation end_to_end)", err=True)
                raise SystemExit(EXIT_USAGE)
            ckpt1 = _load_ckpt_or_exit(resume_path)
            train_stage2(cfg, ckpt1, dataset, out)
    except NonFiniteLossError as exc:
        click.echo(f"training aborted: {exc}", err=True)
        raise SystemExit(EXIT_NUMERIC)
    click.echo(f"done; outputs under {out}")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=str)
@click.option("--seed", type=int, required=True)
@click.option("--yaw", type=float, default=0.0, help="center yaw (radians)")
@click.option("--pitch", type=float, default=0.0)
@click.option("--count", type=int, default=7, help="number of views")
@click.option("--yaw-span", type=float, default=1.0,
              help="total yaw sweep for multi-view output")
@click.option("--emit-photo", is_flag=True, default=False)
@click.option("--emit-mask", is_flag=True, default=False)
@click.option("--out", "out_dir", required=True, type=str)
def generate(ckpt_path, seed, yaw, pitch, count, yaw_span, emit_photo, emit_mask,
             out_dir) -> None:
    """Render drawings for one latent seed across evenly spaced yaws."""
    if count < 1:
        click.echo("--count must be >= 1", err=True)
        raise SystemExit(EXIT_USAGE)
    ckpt = _load_ckpt_or_exit(ckpt_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "generate", None, seed, ckpt.config)
    gen = generator_from_checkpoint(ckpt)
    resolution = render_resolution(ckpt.config, ckpt.stage)
    z = latent_from_seed(ckpt.config, seed)
    yaws = ([yaw] if count == 1 else
            [yaw - yaw_span / 2 + yaw_span * i / (count - 1) for i in range(count)])
    for view, view_yaw in enumerate(yaws):
        pose = pose_from_config(ckpt.config.poses, yaw=view_yaw, pitch=pitch)
        with torch.no_grad():
            synth = gen.synthesize(z, pose, resolution)
        write_image(synth.drawing, out / f"{seed}_{view:03d}.png")
        if emit_photo:
            write_image(synth.photo, out / f"{seed}_{view:03d}_photo.png")
        if emit_mask:
            write_mask(semantic_labels(synth.semantics), out / f"{seed}_{view:03d}_mask.png")
    click.echo(f"wrote {len(yaws)} view(s) to {out}")


def _load_image_dir(path: str) -> list[torch.Tensor]:
    from PIL import Image

    files = sorted(Path(path).glob("*.png"))
    if not files:
        click.echo(f"no PNG images under {path}", err=True)
        raise SystemExit(EXIT_USAGE)
    return [image_to_tensor(Image.open(f)) for f in files]


@main.command("metrics")
@click.option("--gen", "gen_dir", required=True, type=str)
@click.option("--real", "real_dir", required=True, type=str)
@click.option("--metric", type=click.Choice(["fid", "sifid", "swd"]), required=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=str, default=None)
def metrics_cmd(gen_dir, real_dir, metric, seed, out_path) -> None:
    """Compare two image directories; JSON report to stdout (and --out)."""
    gen_images = _load_image_dir(gen_dir)
    real_images = _load_image_dir(real_dir)
    embedder = metrics_mod.RandomConvEmbedder(seed=seed)
    if metric == "fid":
        value = metrics_mod.fid(gen_images, real_images, embedder)
    elif metric == "sifid":
        value = metrics_mod.sifid(gen_images, real_images, embedder)
    else:
        value = metrics_mod.sliced_wasserstein(gen_images, real_images, seed=seed)
    report = {"metric": metric, "value": value, "n_gen": len(gen_images),
              "n_real": len(real_images), "embedder_id": embedder.embedder_id,
              "seed": seed}
    if metric == "swd":
        report["scale"] = metrics_mod.SWD_REPORT_SCALE
    payload = json.dumps(report, indent=1)
    click.echo(payload)
    if out_path:
        Path(out_path).write_text(payload)
    if not math.isfinite(value):
        raise SystemExit(EXIT_NUMERIC)


@main.command("per-view")
@click.option("--ckpt", "ckpt_path", required=True, type=str)
@click.option("--real", "real_dir", required=True, type=str)
@click.option("--poses", "poses_json", required=True, type=str,
              help="JSON list of pose objects {yaw, pitch, ...}")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_csv", required=True, type=str)
def per_view(ckpt_path, real_dir, poses_json, seed, out_csv) -> None:
    """Per-pose SIFID curve; one CSV row per pose."""
    from .geometry import CameraPose

    ckpt = _load_ckpt_or_exit(ckpt_path)
    real_images = _load_image_dir(real_dir)
    raw = json.loads(Path(poses_json).read_text()) if Path(poses_json).exists() \
        else json.loads(poses_json)
    base = ckpt.config.poses
    pose_list = [CameraPose(yaw=float(p.get("yaw", 0.0)), pitch=float(p.get("pitch", 0.0)),
                            radius=float(p.get("radius", base.radius)),
                            fov=float(p.get("fov", base.fov)),
                            near=float(p.get("near", base.near)),
                            far=float(p.get("far", base.far))) for p in raw]
    embedder = metrics_mod.RandomConvEmbedder(seed=seed)
    rows = metrics_mod.per_view_curve(ckpt, pose_list, real_images, embedder,
                                      csv_path=out_csv)
    click.echo(f"wrote {len(rows)} rows to {out_csv}")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=str)
@click.option("--seed", type=int, required=True)
@click.option("--yaw", type=float, default=0.0)
@click.option("--pitch", type=float, default=0.0)
@click.option("--edits", "edits_path", required=True, type=str,
              help="JSON list of {polygon, class, mode} edits")
@click.option("--out", "out_dir", required=True, type=str)
def edit(ckpt_path, seed, yaw, pitch, edits_path, out_dir) -> None:
    """Apply semantic edits and write original/edited drawings and maps."""
    ckpt = _load_ckpt_or_exit(ckpt_path)
    try:
        raw = json.loads(Path(edits_path).read_text())
        edits = [applications.EditOp.from_json_dict(e) for e in raw]
    except (ValueError, OSError) as exc:
        click.echo(f"bad edits file: {exc}", err=True)
        raise SystemExit(EXIT_USAGE)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "edit", edits_path, seed, ckpt.config)
    z = latent_from_seed(ckpt.config, seed)
    pose = pose_from_config(ckpt.config.poses, yaw=yaw, pitch=pitch)
    result = applications.semantic_edit(ckpt, z, pose, edits)
    write_image(result.drawing_original, out / "drawing_original.png")
    write_image(result.drawing_edited, out / "drawing_edited.png")
    write_mask(semantic_labels(result.semantics_original), out / "mask_original.png")
    write_mask(result.labels_edited, out / "mask_edited.png")
    click.echo(f"edit outputs under {out}")


@main.command()
@click.option("--ckpt-content", required=True, type=str)
@click.option("--ckpt-style", required=True, type=str)
@click.option("--seed-content", type=int, required=True)
@click.option("--seed-style", type=int, required=True)
@click.option("--yaw", type=float, default=0.0)
@click.option("--pitch", type=float, default=0.0)
@click.option("--out", "out_path", required=True, type=str)
def transfer(ckpt_content, ckpt_style, seed_content, seed_style, yaw, pitch,
             out_path) -> None:
    """Decode content of one model in the style of another."""
    ck_a = _load_ckpt_or_exit(ckpt_content)
    ck_b = _load_ckpt_or_exit(ckpt_style)
    z1 = latent_from_seed(ck_a.config, seed_content)
    z2 = latent_from_seed(ck_b.config, seed_style)
    pose = pose_from_config(ck_a.config.poses, yaw=yaw, pitch=pitch)
    try:
        drawing = applications.style_transfer(ck_a, ck_b, z1, z2, pose)
    except ValueError as exc:
        click.echo(f"transfer failed: {exc}", err=True)
        raise SystemExit(EXIT_USAGE)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_image(drawing, out_path)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=str)
@click.option("--seed-a", type=int, required=True)
@click.option("--seed-b", type=int, required=True)
@click.option("--yaw-a", type=float, default=-0.3)
@click.option("--yaw-b", type=float, default=0.3)
@click.option("--steps", type=int, default=8)
@click.option("--out", "out_dir", required=True, type=str)
def interpolate(ckpt_path, seed_a, seed_b, yaw_a, yaw_b, steps, out_dir) -> None:
    """Interpolate identity and pose between two seeds."""
    ckpt = _load_ckpt_or_exit(ckpt_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "interpolate", None, seed_a, ckpt.config)
    z1 = latent_from_seed(ckpt.config, seed_a)
    z2 = latent_from_seed(ckpt.config, seed_b)
    pose1 = pose_from_config(ckpt.config.poses, yaw=yaw_a)
    pose2 = pose_from_config(ckpt.config.poses, yaw=yaw_b)
    frames = applications.identity_interpolate(ckpt, z1, z2, pose1, pose2, steps)
    for i, frame in enumerate(frames):
        write_image(frame, out / f"frame_{i:03d}.png")
    click.echo(f"wrote {len(frames)} frames to {out}")


@main.command()
@click.option("--photos", "photos_dir", required=True, type=str,
              help="dataset root with photos/ and masks/")
@click.option("--stylizer", "stylizer_name", type=str, default="edge")
@click.option("--out", "out_dir", required=True, type=str)
def augment(photos_dir, stylizer_name, out_dir) -> None:
    """Stylize a photo dataset into a drawing dataset."""
    try:
        records = discover_records(photos_dir)
        stylizer = get_stylizer(stylizer_name)
    except Exception as exc:
        click.echo(f"augment setup failed: {exc}", err=True)
        raise SystemExit(EXIT_USAGE)
    out_records, manifest = augment_dataset(records, stylizer, out_dir)
    click.echo(json.dumps(manifest, indent=1))


@main.command()
@click.option("--ckpt-dir", required=True, type=str)
@click.option("--port", type=int, default=8000)
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--static", "static_dir", type=str, default=None,
              help="directory with the built studio bundle to serve at /")
def serve(ckpt_dir, port, host, static_dir) -> None:
    """Start the interactive editing service."""
    import uvicorn

    from .service import create_app

    app = create_app(Path(ckpt_dir), static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
