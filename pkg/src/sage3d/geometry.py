"""Pinhole camera geometry.

Pose sampling, per-pixel ray generation, expected depth along rays, and
cross-view reprojection warping of images or feature grids. The camera is a
pinhole looking at the world origin with y up, parameterized by
(yaw, pitch, radius). All functions are pure; nothing here owns state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .config import PoseDistribution

WORLD_UP = (0.0, 1.0, 0.0)

# Depth normalization floor; rays with weight mass below this fall back to far.
DEPTH_EPS = 1e-8

# Minimum camera-space z for a point to count as in front of the camera.
Z_EPS = 1e-6

# Reprojected pixels within this many pixels of the frame edge still count
# as inside; absorbs float rounding at the boundary.
BOUNDARY_EPS = 1e-3


@dataclass(frozen=True)
class CameraPose:
    """Look-at-origin camera on a sphere of the given radius. Angles in radians."""

    yaw: float
    pitch: float
    radius: float
    fov: float
    near: float
    far: float

    def __post_init__(self):
        if not (self.near < self.far):
            raise ValueError(f"near ({self.near}) must be < far ({self.far})")
        if not (0.0 < self.fov < math.pi):
            raise ValueError(f"fov ({self.fov}) must be in (0, pi)")
        if self.radius <= 0:
            raise ValueError(f"radius ({self.radius}) must be positive")

    def to_json_dict(self) -> dict:
        return {"yaw": self.yaw, "pitch": self.pitch, "radius": self.radius,
                "fov": self.fov, "near": self.near, "far": self.far}

    @classmethod
    def from_json_dict(cls, d: dict) -> "CameraPose":
        return cls(yaw=float(d["yaw"]), pitch=float(d["pitch"]),
                   radius=float(d["radius"]), fov=float(d["fov"]),
                   near=float(d["near"]), far=float(d["far"]))


@dataclass(frozen=True)
class CameraFrame:
    """Explicit camera extrinsics: origin plus an orthonormal basis.

    Poses are converted to frames for all ray/projection math; tests and
    tools may build frames directly (e.g. translated cameras that no
    look-at pose can express).
    """

    origin: torch.Tensor     # (3,)
    right: torch.Tensor      # (3,)
    up: torch.Tensor         # (3,)
    forward: torch.Tensor    # (3,)
    fov: float
    near: float
    far: float


@dataclass
class RayBundle:
    origins: torch.Tensor      # (H, W, 3)
    directions: torch.Tensor   # (H, W, 3), unit norm
    resolution: tuple[int, int]


@dataclass
class WarpResult:
    warped: torch.Tensor          # same shape as the warp source
    validity_mask: torch.Tensor   # (H, W) bool; invalid pixels are zero-filled


def camera_frame(pose: CameraPose, dtype: torch.dtype = torch.float64) -> CameraFrame:
    cy, sy = math.cos(pose.yaw), math.sin(pose.yaw)
    cp, sp = math.cos(pose.pitch), math.sin(pose.pitch)
    origin = torch.tensor([sy * cp, sp, cy * cp], dtype=dtype) * pose.radius
    forward = -origin / origin.norm()
    world_up = torch.tensor(WORLD_UP, dtype=dtype)
    right = torch.linalg.cross(forward, world_up)
    norm = right.norm()
    if norm < 1e-8:
        # Looking straight up/down; pick an arbitrary horizontal right axis.
        right = torch.tensor([1.0, 0.0, 0.0], dtype=dtype)
    else:
        right = right / norm
    up = torch.linalg.cross(right, forward)
    return CameraFrame(origin=origin, right=right, up=up, forward=forward,
                       fov=pose.fov, near=pose.near, far=pose.far)


def _as_frame(cam: CameraPose | CameraFrame) -> CameraFrame:
    return cam if isinstance(cam, CameraFrame) else camera_frame(cam)


def sample_viewpoint(generator: torch.Generator, dist: PoseDistribution,
                     max_tries: int = 100) -> CameraPose:
    """Draw a camera pose from the configured prior.

    Deterministic given the generator state. Gaussian draws are redrawn
    (then clamped) when they land outside the hard bounds.
    """
    dist.validate()

    def draw(mean, std, lo, hi):
        if dist.kind == "uniform":
            u = torch.rand((), generator=generator, dtype=torch.float64).item()
            return lo + (hi - lo) * u
        value = mean + std * torch.randn((), generator=generator, dtype=torch.float64).item()
        tries = 0
        while not (lo <= value <= hi) and tries < max_tries:
            value = mean + std * torch.randn((), generator=generator, dtype=torch.float64).item()
            tries += 1
        return min(max(value, lo), hi)

    yaw = draw(dist.yaw_mean, dist.yaw_std, dist.yaw_min, dist.yaw_max)
    pitch = draw(dist.pitch_mean, dist.pitch_std, dist.pitch_min, dist.pitch_max)
    return CameraPose(yaw=yaw, pitch=pitch, radius=dist.radius,
                      fov=dist.fov, near=dist.near, far=dist.far)


def generate_rays(cam: CameraPose | CameraFrame, resolution: tuple[int, int],
                  dtype: torch.dtype = torch.float32) -> RayBundle:
    """One ray per pixel center. Directions are unit vectors; origins all
    equal the camera center. Pure function of (camera, resolution)."""
    h, w = resolution
    if h < 1 or w < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    frame = _as_frame(cam)
    right = frame.right.to(dtype)
    up = frame.up.to(dtype)
    forward = frame.forward.to(dtype)

    tan_half = math.tan(frame.fov / 2.0)
    aspect = w / h
    # Pixel centers in NDC; y points up, rows run top to bottom.
    xs = (torch.arange(w, dtype=dtype) + 0.5) / w * 2.0 - 1.0
    ys = 1.0 - (torch.arange(h, dtype=dtype) + 0.5) / h * 2.0
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")

    dirs = (gx[..., None] * (tan_half * aspect) * right
            + gy[..., None] * tan_half * up
            + forward)
    dirs = dirs / dirs.norm(dim=-1, keepdim=True)
    origins = frame.origin.to(dtype).expand(h, w, 3)
    return RayBundle(origins=origins, directions=dirs, resolution=(h, w))


def project_points(cam: CameraPose | CameraFrame, points: torch.Tensor,
                   resolution: tuple[int, int]):
    """Project world points into pixel coordinates of the given camera.

    Returns (rows, cols, z) where z is camera-space depth along the
    optical axis; z <= 0 means behind the camera.
    """
    h, w = resolution
    frame = _as_frame(cam)
    dtype = points.dtype
    rel = points - frame.origin.to(dtype)
    x = (rel * frame.right.to(dtype)).sum(-1)
    y = (rel * frame.up.to(dtype)).sum(-1)
    z = (rel * frame.forward.to(dtype)).sum(-1)
    tan_half = math.tan(frame.fov / 2.0)
    aspect = w / h
    safe_z = torch.where(z.abs() < Z_EPS, torch.full_like(z, Z_EPS), z)
    x_ndc = x / safe_z / (tan_half * aspect)
    y_ndc = y / safe_z / tan_half
    cols = (x_ndc + 1.0) / 2.0 * w - 0.5
    rows = (1.0 - y_ndc) / 2.0 * h - 0.5
    return rows, cols, z


def expected_depth(weights: torch.Tensor, sample_depths: torch.Tensor,
                   far: float, eps: float = DEPTH_EPS) -> torch.Tensor:
    """Weight-averaged depth per ray: sum(w*d) / max(sum(w), eps).

    Rays whose weight mass falls below eps get the far bound. Invariant to
    uniform rescaling of the weights (up to that fallback).
    """
    if weights.shape != sample_depths.shape:
        raise ValueError(
            f"weights {tuple(weights.shape)} and depths {tuple(sample_depths.shape)} differ")
    if (weights < 0).any():
        raise ValueError("compositing weights must be non-negative")
    wsum = weights.sum(dim=-1)
    depth = (weights * sample_depths).sum(dim=-1) / wsum.clamp_min(eps)
    return torch.where(wsum < eps, torch.full_like(depth, far), depth)


def _bilinear_sample(source: torch.Tensor, rows: torch.Tensor, cols: torch.Tensor):
    """Sample (C, H, W) source at fractional (rows, cols). Out-of-frame
    locations are reported invalid; corner indices are clamped for the
    gather so gradients stay finite."""
    c, h, w = source.shape
    inside = ((rows >= -BOUNDARY_EPS) & (rows <= h - 1 + BOUNDARY_EPS)
              & (cols >= -BOUNDARY_EPS) & (cols <= w - 1 + BOUNDARY_EPS))
    rows = rows.clamp(0, h - 1)
    cols = cols.clamp(0, w - 1)

    r0 = rows.floor().clamp(0, h - 1)
    c0 = cols.floor().clamp(0, w - 1)
    r1 = (r0 + 1).clamp(0, h - 1)
    c1 = (c0 + 1).clamp(0, w - 1)
    fr = (rows - r0).clamp(0.0, 1.0)
    fc = (cols - c0).clamp(0.0, 1.0)

    def gather(ri, ci):
        idx = (ri.long() * w + ci.long()).reshape(-1)
        return source.reshape(c, h * w)[:, idx].reshape(c, *rows.shape)

    v00 = gather(r0, c0)
    v01 = gather(r0, c1)
    v10 = gather(r1, c0)
    v11 = gather(r1, c1)
    top = v00 * (1 - fc) + v01 * fc
    bot = v10 * (1 - fc) + v11 * fc
    return top * (1 - fr) + bot * fr, inside


def warp_to_primary(source: torch.Tensor, depth: torch.Tensor,
                    cam_src: CameraPose | CameraFrame,
                    cam_dst: CameraPose | CameraFrame) -> WarpResult:
    """Resample a source-view image/feature grid into the destination view.

    depth holds per-pixel ray lengths on the destination grid: each
    destination pixel is unprojected along its own ray, the world point is
    projected into the source camera, and the source is bilinearly sampled
    there. Projections that land out of frame, behind the source camera,
    or carry non-positive depth are masked invalid and zero-filled.
    """
    squeeze = source.dim() == 2
    if squeeze:
        source = source[None]
    c, h, w = source.shape
    if depth.shape != (h, w):
        raise ValueError(f"depth {tuple(depth.shape)} does not match source {(h, w)}")

    rays = generate_rays(cam_dst, (h, w), dtype=depth.dtype)
    points = rays.origins + depth[..., None] * rays.directions
    rows, cols, z = project_points(cam_src, points, (h, w))
    sampled, inside = _bilinear_sample(source, rows, cols)
    valid = inside & (z > Z_EPS) & (depth > 0)
    warped = sampled * valid.to(sampled.dtype)
    if squeeze:
        warped = warped[0]
    return WarpResult(warped=warped, validity_mask=valid)
