import math

import pytest
import torch

from sage3d.config import ModelConfig, PoseDistribution, ScheduleEntry, TrainConfig
from sage3d.geometry import CameraPose


@pytest.fixture
def frontal_pose() -> CameraPose:
    return CameraPose(yaw=0.0, pitch=0.0, radius=1.0,
                      fov=12.0 * math.pi / 180.0, near=0.88, far=1.12)


@pytest.fixture
def pose_dist() -> PoseDistribution:
    return PoseDistribution()


@pytest.fixture
def tiny_model() -> ModelConfig:
    """Small widths for fast unit tests; FiLM depth stays at a few layers."""
    return ModelConfig(z_dim=8, style_dim=8, feature_channels=8, film_layers=3,
                       film_hidden=16, mapping_hidden=16, mapping_blocks=1,
                       n_samples=8, decoder_channels=(8, 6, 4), translator_base=4,
                       disc_base_channels=4, disc_max_channels=16)


def tiny_train_config(tiny_model: ModelConfig, steps1: int = 2, steps2: int = 2,
                      seed: int = 0) -> TrainConfig:
    return TrainConfig(
        seed=seed, model=tiny_model,
        stage1=[ScheduleEntry(resolution=8, g_lr=1e-4, d_lr=2e-4, batch_size=2,
                              steps=steps1)],
        stage2=[ScheduleEntry(resolution=8, g_lr=1e-4, d_lr=2e-4, batch_size=2,
                              steps=steps2)],
    )


@pytest.fixture
def train_config(tiny_model) -> TrainConfig:
    return tiny_train_config(tiny_model)


@pytest.fixture(scope="session")
def synthetic_dataset_dir(tmp_path_factory):
    from sage3d.data import make_synthetic_dataset

    root = tmp_path_factory.mktemp("synth")
    make_synthetic_dataset(root, 6, resolution=64, seed=0)
    return root


def fd_gradient(fn, x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Central finite differences of a scalar function w.r.t. tensor x."""
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        up = fn(x).item()
        flat[i] = orig - eps
        down = fn(x).item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


def assert_grad_close(analytic: torch.Tensor, numeric: torch.Tensor,
                      rel_tol: float = 1e-3) -> None:
    scale = numeric.abs().max().clamp_min(1e-6)
    err = (analytic - numeric).abs().max() / scale
    assert err < rel_tol, f"gradient mismatch: rel err {err:.3e}"
