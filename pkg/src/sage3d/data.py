"""Dataset ingestion and raster IO.

A paired dataset is a directory with photos/ (or drawings/) and masks/
subdirectories whose files match by stem. Masks are single-channel palette
PNGs with label values 0..18. A synthetic face-ish dataset generator is
included so pipeline tests and desk runs need no external data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, ImageDraw

from .config import NUM_SEMANTIC_CLASSES

IMAGE_SUBDIRS = ("photos", "drawings", "images")
MASK_SUBDIR = "masks"


def load_palette() -> dict[int, dict]:
    with resources.files("sage3d").joinpath("data/palette.json").open() as fh:
        raw = json.load(fh)
    return {int(k): v for k, v in raw.items()}


def _flat_palette() -> list[int]:
    palette = load_palette()
    flat: list[int] = []
    for i in range(256):
        flat.extend(palette.get(i, {"rgb": [0, 0, 0]})["rgb"])
    return flat


@dataclass(frozen=True)
class DatasetRecord:
    image_path: Path
    mask_path: Path
    split: str = "train"


class DatasetError(RuntimeError):
    pass


def discover_records(root: str | Path, split: str = "train") -> list[DatasetRecord]:
    root = Path(root)
    image_dir = next((root / d for d in IMAGE_SUBDIRS if (root / d).is_dir()), None)
    mask_dir = root / MASK_SUBDIR
    if image_dir is None or not mask_dir.is_dir():
        raise DatasetError(f"{root} lacks an image subdir and a '{MASK_SUBDIR}' subdir")
    records = []
    for image_path in sorted(image_dir.glob("*.png")):
        mask_path = mask_dir / image_path.name
        if mask_path.exists():
            records.append(DatasetRecord(image_path, mask_path, split))
    if not records:
        raise DatasetError(f"no paired records found under {root}")
    return records


def image_to_tensor(img: Image.Image) -> torch.Tensor:
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr).permute(2, 0, 1)


def tensor_to_image(t: torch.Tensor) -> Image.Image:
    arr = ((t.detach().clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    return Image.fromarray(arr.permute(1, 2, 0).numpy())


def write_image(t: torch.Tensor, path: str | Path) -> None:
    tensor_to_image(t).save(path)


def load_mask(path: str | Path) -> torch.Tensor:
    img = Image.open(path)
    if img.mode not in ("P", "L"):
        img = img.convert("L")
    labels = torch.from_numpy(np.asarray(img, dtype=np.int64))
    if labels.max() >= NUM_SEMANTIC_CLASSES or labels.min() < 0:
        raise DatasetError(f"mask {path} has labels outside 0..{NUM_SEMANTIC_CLASSES - 1}")
    return labels


def write_mask(labels: torch.Tensor, path: str | Path) -> None:
    img = Image.fromarray(labels.to(torch.uint8).numpy(), mode="P")
    img.putpalette(_flat_palette())
    img.save(path)


def mask_to_onehot(labels: torch.Tensor) -> torch.Tensor:
    return F.one_hot(labels.long(), NUM_SEMANTIC_CLASSES).movedim(-1, -3).float()


class PairedDataset:
    """In-memory paired (image, mask) dataset with resolution-on-demand
    batching. Small by design; desk-scale sets fit comfortably in RAM."""

    def __init__(self, records: list[DatasetRecord]):
        if not records:
            raise DatasetError("dataset is empty")
        self.records = list(records)
        self._cache: dict[int, tuple[torch.Tensor, torch.Tensor]] = {}

    @classmethod
    def from_dir(cls, root: str | Path) -> "PairedDataset":
        return cls(discover_records(root))

    def __len__(self) -> int:
        return len(self.records)

    def _load(self, idx: int) -> tuple[torch.Tensor, torch.Tensor]:
        if idx not in self._cache:
            rec = self.records[idx]
            image = image_to_tensor(Image.open(rec.image_path))
            labels = load_mask(rec.mask_path)
            if labels.shape != image.shape[-2:]:
                raise DatasetError(f"mask/image resolution mismatch for {rec.image_path}")
            self._cache[idx] = (image, labels)
        return self._cache[idx]

    def batch(self, indices: list[int], resolution: int):
        """Returns (images (B,3,R,R) in [-1,1], onehot masks (B,19,R,R))."""
        images, onehots = [], []
        for idx in indices:
            image, labels = self._load(idx)
            if image.shape[-1] != resolution:
                image = F.interpolate(image[None], size=(resolution, resolution),
                                      mode="bilinear", align_corners=False)[0]
                labels = F.interpolate(labels[None, None].float(),
                                       size=(resolution, resolution),
                                       mode="nearest")[0, 0].long()
            images.append(image)
            onehots.append(mask_to_onehot(labels))
        return torch.stack(images), torch.stack(onehots)


def make_synthetic_dataset(root: str | Path, count: int, resolution: int = 128,
                           seed: int = 0) -> list[DatasetRecord]:
    """Write `count` cartoon face photo/mask pairs under root.

    Faces are randomized ellipse compositions (skin, eyes, nose, mouth,
    hair) so discriminators see structured, non-degenerate inputs and the
    masks are exact by construction.
    """
    root = Path(root)
    photo_dir = root / "photos"
    mask_dir = root / MASK_SUBDIR
    photo_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(count):
        photo, labels = _draw_face(rng, resolution)
        photo_path = photo_dir / f"{i:04d}.png"
        mask_path = mask_dir / f"{i:04d}.png"
        photo.save(photo_path)
        write_mask(torch.from_numpy(labels), mask_path)
        records.append(DatasetRecord(photo_path, mask_path))
    return records


def _draw_face(rng: np.random.Generator, res: int):
    photo = Image.new("RGB", (res, res))
    mask = Image.new("L", (res, res), 0)
    pdraw = ImageDraw.Draw(photo)
    mdraw = ImageDraw.Draw(mask)

    bg = tuple(int(v) for v in rng.integers(150, 230, 3))
    pdraw.rectangle([0, 0, res, res], fill=bg)

    cx = res / 2 + rng.uniform(-0.05, 0.05) * res
    cy = res / 2 + rng.uniform(-0.03, 0.06) * res
    fw = rng.uniform(0.28, 0.36) * res
    fh = rng.uniform(0.34, 0.44) * res
    skin = tuple(int(v) for v in (rng.integers(180, 240), rng.integers(140, 190),
                                  rng.integers(110, 160)))

    def ellipse(box, color, label):
        pdraw.ellipse(box, fill=color)
        mdraw.ellipse(box, fill=label)

    # hair behind the face, then the face on top
    hair = tuple(int(v) for v in rng.integers(10, 90, 3))
    ellipse([cx - fw * 1.15, cy - fh * 1.25, cx + fw * 1.15, cy + fh * 0.4],
            hair, 13)
    ellipse([cx - fw, cy - fh, cx + fw, cy + fh], skin, 1)

    eye_y = cy - fh * 0.2
    eye_dx = fw * 0.45
    eye_w, eye_h = fw * 0.18, fh * 0.10
    eye = tuple(int(v) for v in rng.integers(20, 120, 3))
    ellipse([cx - eye_dx - eye_w, eye_y - eye_h, cx - eye_dx + eye_w, eye_y + eye_h],
            eye, 4)
    ellipse([cx + eye_dx - eye_w, eye_y - eye_h, cx + eye_dx + eye_w, eye_y + eye_h],
            eye, 5)

    nose_c = tuple(min(255, int(v * 1.1)) for v in skin)
    ellipse([cx - fw * 0.1, cy - fh * 0.05, cx + fw * 0.1, cy + fh * 0.25], nose_c, 2)

    mouth_y = cy + fh * 0.55
    mouth = (int(rng.integers(120, 200)), int(rng.integers(20, 80)), int(rng.integers(20, 80)))
    ellipse([cx - fw * 0.35, mouth_y - fh * 0.08, cx + fw * 0.35, mouth_y + fh * 0.08],
            mouth, 10)

    # mild photometric noise so photos are not flat-shaded
    arr = np.asarray(photo, dtype=np.float32)
    arr = arr + rng.normal(0.0, 4.0, arr.shape)
    photo = Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8))
    return photo, np.asarray(mask, dtype=np.int64)
