import numpy as np
import pytest
import torch

from sage3d.metrics import (FeatureStats, RandomConvEmbedder, fid, frechet_distance,
                            per_view_curve, sifid, sliced_wasserstein,
                            sliced_wasserstein_pointsets)


def stats_1d(mu: float, var: float) -> FeatureStats:
    return FeatureStats(mean=np.array([mu]), cov=np.array([[var]]))


class TestFrechet:
    def test_identical_stats_give_zero(self):
        g = np.random.default_rng(0)
        samples = g.normal(size=(200, 4))
        st = FeatureStats.from_samples(samples)
        assert frechet_distance(st, st) == pytest.approx(0.0, abs=1e-9)

    def test_1d_unit_variance_mean_shift(self):
        assert frechet_distance(stats_1d(0, 1), stats_1d(1, 1)) == \
            pytest.approx(1.0, abs=1e-9)

    def test_1d_mean_and_variance_shift(self):
        # 1 + (1 + 4 - 2*2) = 2
        assert frechet_distance(stats_1d(0, 1), stats_1d(1, 4)) == \
            pytest.approx(2.0, abs=1e-9)

    def test_symmetry(self):
        g = np.random.default_rng(1)
        a = FeatureStats.from_samples(g.normal(size=(100, 5)))
        b = FeatureStats.from_samples(g.normal(loc=0.3, size=(120, 5)))
        d_ab = frechet_distance(a, b)
        d_ba = frechet_distance(b, a)
        assert d_ab == pytest.approx(d_ba, abs=1e-8)
        assert d_ab >= 0

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            frechet_distance(stats_1d(0, 1),
                             FeatureStats(mean=np.zeros(2), cov=np.eye(2)))

    def test_covariance_is_symmetric(self):
        g = np.random.default_rng(2)
        st = FeatureStats.from_samples(g.normal(size=(50, 6)))
        assert np.abs(st.cov - st.cov.T).max() < 1e-8


class _FirstChannelsEmbedder:
    embedder_id = "first2"

    def embed(self, image):
        return image[:2]

    def embed_vector(self, image):
        return self.embed(image).mean(dim=(-2, -1))


class TestSifid:
    def test_set_against_itself_is_zero(self):
        g = torch.Generator().manual_seed(0)
        images = [torch.rand(3, 16, 16, generator=g) for _ in range(4)]
        emb = RandomConvEmbedder(seed=0, channels=8)
        assert sifid(images, list(images), emb) == pytest.approx(0.0, abs=1e-6)

    def test_single_image_matches_manual_stats(self):
        g = torch.Generator().manual_seed(1)
        a = torch.rand(3, 8, 8, generator=g, dtype=torch.float64)
        b = torch.rand(3, 8, 8, generator=g, dtype=torch.float64)
        emb = _FirstChannelsEmbedder()
        got = sifid([a], [b], emb)

        # manual mu/cov over the 64 spatial positions of each 2-channel map
        def manual_stats(img):
            samples = img[:2].reshape(2, -1).T.numpy()
            mu = samples.mean(axis=0)
            centered = samples - mu
            cov = centered.T @ centered / samples.shape[0]
            return FeatureStats(mean=mu, cov=(cov + cov.T) / 2)

        oracle = frechet_distance(manual_stats(a), manual_stats(b))
        assert got == pytest.approx(oracle, rel=1e-9)

    def test_noise_strictly_increases_sifid(self):
        g = torch.Generator().manual_seed(2)
        real = [torch.rand(3, 16, 16, generator=g) * 2 - 1 for _ in range(4)]
        clean = [r.clone() for r in real]
        noisy = [(r + 0.8 * torch.randn(3, 16, 16, generator=g)).clamp(-1, 1)
                 for r in real]
        emb = RandomConvEmbedder(seed=0, channels=8)
        assert sifid(noisy, real, emb) > sifid(clean, real, emb)

    def test_empty_sets_rejected(self):
        with pytest.raises(ValueError):
            sifid([], [torch.rand(3, 8, 8)], RandomConvEmbedder())


class TestSlicedWasserstein:
    def test_identical_sets_zero(self):
        g = torch.Generator().manual_seed(0)
        images = [torch.rand(3, 32, 32, generator=g) for _ in range(3)]
        value = sliced_wasserstein(images, [im.clone() for im in images], seed=3)
        assert value < 1e-6

    def test_1d_point_sets_analytic(self):
        a = torch.tensor([[0.0]], dtype=torch.float64)
        b = torch.tensor([[1.0]], dtype=torch.float64)
        proj = torch.tensor([[1.0]], dtype=torch.float64)
        assert sliced_wasserstein_pointsets(a, b, proj) == pytest.approx(1.0, abs=1e-9)

    def test_matches_sort_based_oracle_per_projection(self):
        g = torch.Generator().manual_seed(1)
        a = torch.randn(40, 6, generator=g, dtype=torch.float64)
        b = torch.randn(40, 6, generator=g, dtype=torch.float64)
        dirs = torch.randn(8, 6, generator=g, dtype=torch.float64)
        dirs = dirs / dirs.norm(dim=1, keepdim=True)
        got = sliced_wasserstein_pointsets(a, b, dirs)

        total = 0.0
        for k in range(8):
            pa = sorted((a @ dirs[k]).tolist())
            pb = sorted((b @ dirs[k]).tolist())
            total += sum(abs(x - y) for x, y in zip(pa, pb)) / len(pa)
        assert got == pytest.approx(total / 8, abs=1e-6)

    def test_invariant_under_shared_permutation(self):
        g = torch.Generator().manual_seed(2)
        images = [torch.rand(3, 32, 32, generator=g) for _ in range(4)]
        others = [torch.rand(3, 32, 32, generator=g) for _ in range(4)]
        v1 = sliced_wasserstein(images, others, seed=5)
        perm = [2, 0, 3, 1]
        v2 = sliced_wasserstein([images[i] for i in perm],
                                [others[i] for i in perm], seed=5)
        assert v1 == pytest.approx(v2, rel=1e-9)

    def test_nonnegative_and_deterministic(self):
        g = torch.Generator().manual_seed(3)
        a = [torch.rand(3, 16, 16, generator=g) for _ in range(2)]
        b = [torch.rand(3, 16, 16, generator=g) for _ in range(2)]
        v1 = sliced_wasserstein(a, b, seed=7)
        v2 = sliced_wasserstein(a, b, seed=7)
        assert v1 == v2 >= 0

    def test_empty_sets_rejected(self):
        with pytest.raises(ValueError):
            sliced_wasserstein([], [torch.rand(3, 16, 16)])


class TestFid:
    def test_identical_sets_near_zero(self):
        g = torch.Generator().manual_seed(0)
        images = [torch.rand(3, 16, 16, generator=g) for _ in range(8)]
        emb = RandomConvEmbedder(seed=1, channels=4)
        assert fid(images, list(images), emb) == pytest.approx(0.0, abs=1e-6)


class TestPerViewCurve:
    @pytest.fixture
    def tiny_ckpt(self, tiny_model):
        from sage3d.config import ScheduleEntry, TrainConfig
        from sage3d.training import build_generator, make_checkpoint

        cfg = TrainConfig(seed=0, model=tiny_model,
                          stage1=[ScheduleEntry(8, 1e-4, 1e-4, 1, 0)])
        gen = build_generator(cfg, stage=1)
        return make_checkpoint(cfg, gen, {}, {}, stage=1, step=0, frozen=[])

    def test_one_row_per_pose(self, tiny_ckpt, tmp_path):
        from sage3d.inference import pose_from_config

        poses = [pose_from_config(tiny_ckpt.config.poses, yaw=y)
                 for y in (-0.3, -0.1, 0.0, 0.1, 0.3, 0.5, 0.7)]
        g = torch.Generator().manual_seed(0)
        real = [torch.rand(3, 64, 64, generator=g) * 2 - 1 for _ in range(2)]
        emb = RandomConvEmbedder(seed=0, channels=4)
        csv_path = tmp_path / "curve.csv"
        rows = per_view_curve(tiny_ckpt, poses, real, emb, z_seeds=[0, 1],
                              csv_path=csv_path)
        assert len(rows) == 7
        lines = csv_path.read_text().strip().splitlines()
        assert len(lines) == 8  # header + one row per pose
        assert lines[0] == "pose_index,yaw,pitch,sifid"

    def test_generated_equal_real_gives_near_zero(self, tiny_ckpt):
        from sage3d.inference import (generator_from_checkpoint, latent_from_seed,
                                      pose_from_config, render_resolution)

        pose = pose_from_config(tiny_ckpt.config.poses, yaw=0.0)
        gen = generator_from_checkpoint(tiny_ckpt)
        res = render_resolution(tiny_ckpt.config, tiny_ckpt.stage)
        real = []
        for seed in (0, 1):
            z = latent_from_seed(tiny_ckpt.config, seed)
            with torch.no_grad():
                real.append(gen.synthesize(z, pose, res).drawing)
        emb = RandomConvEmbedder(seed=0, channels=4)
        rows = per_view_curve(tiny_ckpt, [pose], real, emb, z_seeds=[0, 1])
        assert rows[0]["sifid"] == pytest.approx(0.0, abs=1e-6)
