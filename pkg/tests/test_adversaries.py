import pytest
import torch
from torch import nn

from sage3d.adversaries import Discriminator, discriminate, r1_penalty
from conftest import assert_grad_close, fd_gradient


def make_disc(role="image", max_res=64, seed=0, tiny_model=None):
    from sage3d.config import ModelConfig

    cfg = tiny_model or ModelConfig(disc_base_channels=4, disc_max_channels=16)
    return Discriminator(role, cfg, max_res, torch.Generator().manual_seed(seed))


class TestDiscriminator:
    def test_batch_of_b_samples_gives_b_scores(self):
        d = make_disc()
        batch = torch.randn(5, 3, 64, 64)
        scores = discriminate(d, batch)
        assert scores.shape == (5,)

    def test_duplicated_sample_scores_identically(self):
        d = make_disc(seed=1)
        g = torch.Generator().manual_seed(2)
        sample = torch.randn(1, 3, 32, 32, generator=g)
        batch = torch.cat([sample, torch.randn(2, 3, 32, 32, generator=g),
                           sample])
        scores = d(batch)
        assert scores[0].item() == scores[3].item()

    def test_role_channel_contracts(self):
        assert make_disc("semantic").input_channels == 19
        assert make_disc("image").input_channels == 3
        assert make_disc("drawing").input_channels == 3

    def test_channel_mismatch_rejected(self):
        d = make_disc("semantic")
        with pytest.raises(ValueError):
            d(torch.randn(2, 3, 64, 64))

    def test_progressive_stage_indices(self):
        d = make_disc(max_res=64)
        assert d.stage_index(64) == 0
        assert d.stage_index(32) == 1
        assert d.stage_index(8) == 3
        with pytest.raises(ValueError):
            d.stage_index(128)

    def test_all_scheduled_resolutions_forward(self):
        d = make_disc(max_res=64)
        for res in (64, 32, 16, 8):
            scores = d(torch.randn(2, 3, res, res))
            assert scores.shape == (2,)

    def test_unknown_role_rejected(self):
        with pytest.raises(ValueError):
            make_disc("audio")

    def test_score_gradient_matches_finite_differences(self):
        d = make_disc(max_res=8, seed=3).double()
        g = torch.Generator().manual_seed(4)
        x = torch.randn(1, 3, 8, 8, generator=g, dtype=torch.float64)

        def scalar(t):
            return d(t).sum()

        xg = x.clone().requires_grad_(True)
        analytic = torch.autograd.grad(scalar(xg), xg)[0]
        numeric = fd_gradient(scalar, x.clone(), eps=1e-6)
        assert_grad_close(analytic, numeric, rel_tol=1e-3)


class _Linear(nn.Module):
    def __init__(self, a: torch.Tensor):
        super().__init__()
        self.a = nn.Parameter(a)

    def forward(self, x):
        return x.flatten(1) @ self.a


class TestR1Penalty:
    def test_constant_discriminator_gives_zero(self):
        d = _Linear(torch.zeros(12, dtype=torch.float64))
        batch = torch.randn(4, 3, 2, 2, dtype=torch.float64)
        assert r1_penalty(d, batch).item() == 0.0

    def test_linear_discriminator_gives_squared_norm(self):
        g = torch.Generator().manual_seed(0)
        a = torch.randn(12, generator=g, dtype=torch.float64)
        d = _Linear(a.clone())
        batch = torch.randn(5, 3, 2, 2, generator=g, dtype=torch.float64)
        expected = (a ** 2).sum().item()
        assert r1_penalty(d, batch).item() == pytest.approx(expected, rel=1e-12)

    def test_nonnegative_on_random_nets(self):
        for seed in range(3):
            d = make_disc(max_res=8, seed=seed)
            batch = torch.randn(3, 3, 8, 8,
                                generator=torch.Generator().manual_seed(seed))
            assert r1_penalty(d, batch).item() >= 0.0

    def test_matches_finite_difference_gradient_norm(self):
        """R1 equals the mean squared gradient norm; the gradient is checked
        against central finite differences of the score."""
        d = make_disc(max_res=8, seed=7).double()
        g = torch.Generator().manual_seed(8)
        x = torch.randn(2, 3, 8, 8, generator=g, dtype=torch.float64)

        numeric_sq = 0.0
        for b in range(2):
            xb = x[b:b + 1].clone()
            grad_b = fd_gradient(lambda t: d(t).sum(), xb, eps=1e-6)
            numeric_sq += grad_b.pow(2).sum().item()
        numeric = numeric_sq / 2
        assert r1_penalty(d, x).item() == pytest.approx(numeric, rel=1e-3)

    def test_differentiable_wrt_discriminator_parameters(self):
        d = make_disc(max_res=8, seed=9)
        batch = torch.randn(2, 3, 8, 8, generator=torch.Generator().manual_seed(10))
        penalty = r1_penalty(d, batch)
        penalty.backward()
        grads = [p.grad for p in d.parameters() if p.grad is not None]
        assert any(g.abs().sum() > 0 for g in grads)
