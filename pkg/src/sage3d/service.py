"""HTTP/JSON inference service for interactive semantic editing and
viewpoint steering.

Checkpoints are read-only; all mutable state lives in in-memory sessions
(LRU-capped). A session pins a latent at creation, tracks the current pose
and an ordered edit log, and every response is reproducible from
(checkpoint, seed, pose, edit log).
"""

from __future__ import annotations

import base64
import io
import itertools
import json
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from .applications import EditOp, apply_edits
from .checkpoint import Checkpoint, load_checkpoint
from .config import NUM_SEMANTIC_CLASSES, UPSAMPLE_FACTOR
from .data import _flat_palette, tensor_to_image
from .decoders import semantic_labels
from .inference import (generator_from_checkpoint, latent_from_seed,
                        pose_from_config, render_resolution)
from .model import PortraitGenerator

DEFAULT_SESSION_CAP = 64


def _png_b64(image) -> str:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _drawing_b64(t: torch.Tensor) -> str:
    return _png_b64(tensor_to_image(t))


def _mask_b64(labels: torch.Tensor) -> str:
    img = Image.fromarray(labels.to(torch.uint8).numpy(), mode="P")
    img.putpalette(_flat_palette())
    return _png_b64(img)


@dataclass
class Session:
    session_id: str
    ckpt_id: str
    seed: int
    z: torch.Tensor
    yaw: float = 0.0
    pitch: float = 0.0
    edit_log: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionCreate(BaseModel):
    ckpt_id: str | None = None
    seed: int | None = None


class EditRequest(BaseModel):
    edits: list[dict]


class _Registry:
    """Lazy checkpoint/generator cache over a directory of checkpoint dirs."""

    def __init__(self, ckpt_dir: Path):
        self.ckpt_dir = Path(ckpt_dir)
        self._cache: dict[str, tuple[Checkpoint, PortraitGenerator]] = {}

    def list_entries(self) -> list[dict]:
        entries = []
        if not self.ckpt_dir.is_dir():
            return entries
        for sub in sorted(self.ckpt_dir.iterdir()):
            if (sub / "meta.json").exists() and (sub / "params.bin").exists():
                meta = json.loads((sub / "meta.json").read_text())
                cfg = meta.get("config", {})
                stage = meta.get("stage", 1)
                schedules = cfg.get("stage2") or cfg.get("stage1") or []
                res = (schedules[-1]["resolution"] * UPSAMPLE_FACTOR
                       if schedules else None)
                entries.append({"ckpt_id": sub.name,
                                "style_name": cfg.get("style_name", "default"),
                                "resolution": res})
        return entries

    def get(self, ckpt_id: str) -> tuple[Checkpoint, PortraitGenerator]:
        if ckpt_id not in self._cache:
            path = self.ckpt_dir / ckpt_id
            if not (path / "meta.json").exists():
                raise KeyError(ckpt_id)
            ckpt = load_checkpoint(path)
            self._cache[ckpt_id] = (ckpt, generator_from_checkpoint(ckpt))
        return self._cache[ckpt_id]


def create_app(ckpt_dir: str | Path, session_cap: int = DEFAULT_SESSION_CAP,
               static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="portrait drawing studio", version="1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    registry = _Registry(Path(ckpt_dir))
    sessions: OrderedDict[str, Session] = OrderedDict()
    sessions_lock = threading.Lock()
    counter = itertools.count(1)

    def get_session(session_id: str) -> Session:
        with sessions_lock:
            if session_id not in sessions:
                raise HTTPException(404, f"unknown session {session_id}")
            sessions.move_to_end(session_id)
            return sessions[session_id]

    def render_session(session: Session):
        ckpt, gen = registry.get(session.ckpt_id)
        pose = pose_from_config(ckpt.config.poses, yaw=session.yaw,
                                pitch=session.pitch)
        resolution = render_resolution(ckpt.config, ckpt.stage)
        with torch.no_grad():
            out = gen.synthesize(session.z, pose, resolution)
            probs = out.semantics
            if session.edit_log:
                edits = [EditOp.from_json_dict(e) for e in session.edit_log]
                probs = apply_edits(probs, edits)
                drawing = (gen.translator(out.photo, probs)
                           if gen.translator is not None else out.drawing)
            else:
                drawing = out.drawing
        return drawing, probs, out.photo

    @app.get("/api/checkpoints")
    def list_checkpoints():
        return registry.list_entries()

    @app.post("/api/session")
    def create_session(body: SessionCreate):
        if body.seed is None:
            raise HTTPException(400, "seed is required")
        if body.ckpt_id is None:
            raise HTTPException(400, "ckpt_id is required")
        try:
            ckpt, _ = registry.get(body.ckpt_id)
        except KeyError:
            raise HTTPException(404, f"unknown checkpoint {body.ckpt_id!r}")
        session = Session(session_id=f"s{next(counter):06d}", ckpt_id=body.ckpt_id,
                          seed=body.seed,
                          z=latent_from_seed(ckpt.config, body.seed))
        with sessions_lock:
            sessions[session.session_id] = session
            while len(sessions) > session_cap:
                sessions.popitem(last=False)
        drawing, probs, _ = render_session(session)
        return {"session_id": session.session_id,
                "preview_png_b64": _drawing_b64(drawing),
                "mask_png_b64": _mask_b64(semantic_labels(probs))}

    @app.get("/api/session/{session_id}/render")
    def render(session_id: str, yaw: float = 0.0, pitch: float = 0.0):
        session = get_session(session_id)
        ckpt, _ = registry.get(session.ckpt_id)
        poses = ckpt.config.poses
        if not (poses.yaw_min <= yaw <= poses.yaw_max
                and poses.pitch_min <= pitch <= poses.pitch_max):
            return JSONResponse(status_code=422, content={
                "detail": "pose out of bounds",
                "bounds": {"yaw": [poses.yaw_min, poses.yaw_max],
                           "pitch": [poses.pitch_min, poses.pitch_max]}})
        with session.lock:
            session.yaw = yaw
            session.pitch = pitch
            drawing, probs, photo = render_session(session)
        return {"drawing_png_b64": _drawing_b64(drawing),
                "mask_png_b64": _mask_b64(semantic_labels(probs)),
                "photo_png_b64": _drawing_b64(photo)}

    @app.post("/api/session/{session_id}/edit")
    def edit(session_id: str, body: EditRequest):
        session = get_session(session_id)
        parsed = []
        for raw in body.edits:
            cls_val = raw.get("class") if isinstance(raw, dict) else None
            if isinstance(cls_val, (int, float)) and not (
                    0 <= int(cls_val) < NUM_SEMANTIC_CLASSES):
                raise HTTPException(
                    422, f"class {cls_val} outside 0..{NUM_SEMANTIC_CLASSES - 1}")
            try:
                op = EditOp.from_json_dict(raw)
            except ValueError as exc:
                raise HTTPException(400, f"malformed edit: {exc}")
            parsed.append(op.to_json_dict())
        with session.lock:
            session.edit_log.extend(parsed)
            drawing, probs, _ = render_session(session)
        return {"drawing_png_b64": _drawing_b64(drawing),
                "mask_png_b64": _mask_b64(semantic_labels(probs))}

    @app.delete("/api/session/{session_id}/edit")
    def clear_edits(session_id: str):
        session = get_session(session_id)
        with session.lock:
            session.edit_log.clear()
            drawing, probs, _ = render_session(session)
        return {"drawing_png_b64": _drawing_b64(drawing),
                "mask_png_b64": _mask_b64(semantic_labels(probs))}

    @app.get("/api/session/{session_id}/edits")
    def export_edits(session_id: str):
        session = get_session(session_id)
        return {"seed": session.seed, "ckpt_id": session.ckpt_id,
                "edits": list(session.edit_log)}

    @app.get("/api/spec")
    def openapi_spec():
        return app.openapi()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="studio")
    return app
