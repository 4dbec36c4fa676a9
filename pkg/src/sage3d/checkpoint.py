"""Checkpoint container and its on-disk codec.

A checkpoint directory holds params.bin (all model and optimizer tensors in
one indexed binary blob) and meta.json (stage/step counters, the config
snapshot, the frozen-parameter manifest, and the blob's SHA-256). Loading
verifies the checksum and save -> load -> save is byte-identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig

MAGIC = b"SAGE3DCK"
FORMAT_VERSION = 1
OPTIM_PREFIX = "optim."

_DTYPES = {
    "float32": (np.float32, torch.float32),
    "float64": (np.float64, torch.float64),
    "int64": (np.int64, torch.int64),
    "int32": (np.int32, torch.int32),
    "uint8": (np.uint8, torch.uint8),
    "bool": (np.bool_, torch.bool),
}
_TORCH_NAMES = {t: name for name, (_, t) in _DTYPES.items()}


class CheckpointIntegrityError(RuntimeError):
    """The stored bytes do not match their recorded checksum or layout."""


@dataclass
class Checkpoint:
    params: dict[str, torch.Tensor]
    optim: dict[str, torch.Tensor]
    stage: int
    step: int
    config: TrainConfig
    frozen: list[str] = field(default_factory=list)

    def clone_params(self) -> dict[str, torch.Tensor]:
        return {k: v.clone() for k, v in self.params.items()}


def _encode_tensors(tensors: dict[str, torch.Tensor]) -> bytes:
    index = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        dtype_name = _TORCH_NAMES.get(t.dtype)
        if dtype_name is None:
            raise ValueError(f"unsupported tensor dtype {t.dtype} for {name}")
        raw = t.numpy().tobytes()
        index.append({"name": name, "dtype": dtype_name,
                      "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    index_json = json.dumps({"tensors": index}, sort_keys=True).encode()
    header = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(index_json))
    return header + index_json + b"".join(blobs)


def _decode_tensors(payload: bytes) -> dict[str, torch.Tensor]:
    if payload[:8] != MAGIC:
        raise CheckpointIntegrityError("bad magic; not a checkpoint blob")
    version, index_len = struct.unpack("<IQ", payload[8:20])
    if version != FORMAT_VERSION:
        raise CheckpointIntegrityError(f"unsupported checkpoint version {version}")
    try:
        index = json.loads(payload[20:20 + index_len])["tensors"]
    except (ValueError, KeyError) as exc:
        raise CheckpointIntegrityError(f"corrupt tensor index: {exc}") from exc
    data = payload[20 + index_len:]
    out: dict[str, torch.Tensor] = {}
    for entry in index:
        np_dtype, _ = _DTYPES[entry["dtype"]]
        raw = data[entry["offset"]: entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CheckpointIntegrityError(f"truncated tensor data for {entry['name']}")
        arr = np.frombuffer(raw, dtype=np_dtype).reshape(entry["shape"]).copy()
        out[entry["name"]] = torch.from_numpy(arr)
    return out


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    merged = dict(ckpt.params)
    for name, t in ckpt.optim.items():
        merged[OPTIM_PREFIX + name] = t
    payload = _encode_tensors(merged)
    (path / "params.bin").write_bytes(payload)
    meta = {
        "format_version": FORMAT_VERSION,
        "stage": ckpt.stage,
        "step": ckpt.step,
        "frozen": sorted(ckpt.frozen),
        "config": dataclasses.asdict(ckpt.config),
        "params_sha256": hashlib.sha256(payload).hexdigest(),
    }
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    meta_path = path / "meta.json"
    bin_path = path / "params.bin"
    if not meta_path.exists() or not bin_path.exists():
        raise FileNotFoundError(f"{path} is not a checkpoint directory")
    meta = json.loads(meta_path.read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointIntegrityError(
            f"unsupported checkpoint format version {meta.get('format_version')}")
    payload = bin_path.read_bytes()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != meta.get("params_sha256"):
        raise CheckpointIntegrityError(
            f"checksum mismatch for {bin_path}: expected {meta.get('params_sha256')}, "
            f"got {digest}")
    tensors = _decode_tensors(payload)
    params = {k: v for k, v in tensors.items() if not k.startswith(OPTIM_PREFIX)}
    optim = {k[len(OPTIM_PREFIX):]: v for k, v in tensors.items()
             if k.startswith(OPTIM_PREFIX)}
    config = TrainConfig.from_dict(meta["config"])
    return Checkpoint(params=params, optim=optim, stage=int(meta["stage"]),
                      step=int(meta["step"]), config=config,
                      frozen=list(meta.get("frozen", [])))
