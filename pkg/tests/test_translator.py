import pytest
import torch

from sage3d.config import ModelConfig, NUM_SEMANTIC_CLASSES
from sage3d.decoders import instance_normalize, normalize_semantics
from sage3d.translator import DomainTranslator, Spade, coerce_semantic_input


def make_translator(base=4, seed=0, use_spade=True) -> DomainTranslator:
    cfg = ModelConfig(translator_base=base)
    return DomainTranslator(cfg, torch.Generator().manual_seed(seed),
                            use_spade=use_spade)


def random_inputs(n=64, seed=0):
    g = torch.Generator().manual_seed(seed)
    img = torch.rand(3, n, n, generator=g) * 2 - 1
    probs = normalize_semantics(torch.randn(NUM_SEMANTIC_CLASSES, n, n, generator=g))
    return img, probs


class TestSpade:
    def test_identity_init_is_pure_instance_norm(self):
        g = torch.Generator().manual_seed(0)
        spade = Spade(6, g)
        with torch.no_grad():
            spade.gamma.weight.zero_()
            spade.gamma.bias.zero_()
            spade.beta.weight.zero_()
            spade.beta.bias.zero_()
        x = torch.randn(1, 6, 8, 8, generator=g)
        seg = torch.rand(1, NUM_SEMANTIC_CLASSES, 8, 8, generator=g)
        out = spade(x, seg)
        assert torch.allclose(out, instance_normalize(x, eps=1e-5), atol=1e-6)

    def test_modulation_depends_on_semantics(self):
        g = torch.Generator().manual_seed(1)
        spade = Spade(4, g)
        x = torch.randn(1, 4, 8, 8, generator=g)
        seg_a = torch.rand(1, NUM_SEMANTIC_CLASSES, 8, 8, generator=g)
        seg_b = torch.rand(1, NUM_SEMANTIC_CLASSES, 8, 8, generator=g)
        assert not torch.allclose(spade(x, seg_a), spade(x, seg_b))

    def test_pre_modulation_statistics_oracle(self):
        """The normalization half of the block produces per-channel mean 0,
        variance 1 against a direct statistics computation."""
        g = torch.Generator().manual_seed(2)
        x = torch.randn(1, 5, 16, 16, generator=g, dtype=torch.float64) * 4 + 1
        normalized = instance_normalize(x, eps=1e-5)
        for c in range(5):
            vals = x[0, c]
            mu = vals.mean()
            var = ((vals - mu) ** 2).mean()
            oracle = (vals - mu) / torch.sqrt(var + 1e-5)
            assert (normalized[0, c] - oracle).abs().max() < 1e-12
        assert normalized.mean(dim=(-2, -1)).abs().max() < 1e-10
        assert (normalized.var(dim=(-2, -1), unbiased=False) - 1).abs().max() < 1e-4

    def test_degenerate_variance_is_finite(self):
        g = torch.Generator().manual_seed(3)
        spade = Spade(2, g)
        x = torch.full((1, 2, 8, 8), 5.0)
        seg = torch.rand(1, NUM_SEMANTIC_CLASSES, 8, 8, generator=g)
        assert torch.isfinite(spade(x, seg)).all()


class TestCoercion:
    def test_label_map_is_one_hot_encoded(self):
        labels = torch.tensor([[0, 3], [18, 1]])
        onehot = coerce_semantic_input(labels)
        assert onehot.shape == (NUM_SEMANTIC_CLASSES, 2, 2)
        assert onehot.sum(0).eq(1).all()
        assert onehot[3, 0, 1] == 1.0

    def test_probability_map_passes_through(self):
        probs = torch.rand(NUM_SEMANTIC_CLASSES, 4, 4)
        assert coerce_semantic_input(probs) is probs

    def test_out_of_range_labels_rejected(self):
        with pytest.raises(ValueError):
            coerce_semantic_input(torch.tensor([[19]]))


class TestTranslate:
    def test_output_shape_matches_input(self):
        tr = make_translator()
        img, probs = random_inputs()
        out = tr(img, probs)
        assert out.shape == img.shape

    def test_values_bounded(self):
        tr = make_translator(seed=1)
        img, probs = random_inputs(seed=1)
        out = tr(img, probs)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_resolution_mismatch_rejected(self):
        tr = make_translator()
        img, _ = random_inputs()
        with pytest.raises(ValueError):
            tr(img, torch.rand(NUM_SEMANTIC_CLASSES, 32, 32))

    def test_deterministic(self):
        tr = make_translator(seed=2)
        img, probs = random_inputs(seed=2)
        assert torch.equal(tr(img, probs), tr(img, probs))

    def test_gradients_reach_both_inputs(self):
        tr = make_translator(seed=3)
        img, probs = random_inputs(n=32, seed=3)
        img = img.requires_grad_(True)
        probs = probs.detach().requires_grad_(True)
        out = tr(img, probs)
        out.sum().backward()
        assert img.grad is not None and img.grad.abs().sum() > 0
        assert probs.grad is not None and probs.grad.abs().sum() > 0

    def test_semantic_edit_stays_inside_receptive_footprint(self):
        """An edit to the semantic input changes the output inside the
        architecture-derived footprint; leakage outside stays below the
        configured bound (instance-norm statistics couple weakly)."""
        leakage_bound = 5e-3
        tr = make_translator(base=8, seed=4)
        n = 256
        img, probs = random_inputs(n=n, seed=4)
        r0, r1, c0, c1 = 120, 135, 120, 135
        edited = probs.clone()
        onehot = torch.zeros(NUM_SEMANTIC_CLASSES)
        onehot[4] = 1.0
        edited[:, r0:r1 + 1, c0:c1 + 1] = onehot[:, None, None]
        with torch.no_grad():
            base = tr(img, probs)
            out = tr(img, edited)
        diff = (out - base).abs()
        a0, a1, b0, b1 = tr.affected_bbox((r0, r1, c0, c1), (n, n))
        assert a0 > 0 and b0 > 0 and a1 < n - 1 and b1 < n - 1, "footprint must leave margin"
        outside = diff.clone()
        outside[:, a0:a1 + 1, b0:b1 + 1] = 0
        inside_max = diff[:, r0:r1 + 1, c0:c1 + 1].max()
        assert inside_max > 0, "edit must change the edited region"
        assert outside.max() < leakage_bound
        assert inside_max > 5 * outside.max()

    def test_pristine_unet_has_zero_spade_parameters(self):
        tr = make_translator(use_spade=False)
        spade_params = [n for n, _ in tr.named_parameters() if "spade" in n]
        assert spade_params == []
        img, probs = random_inputs(n=32)
        out = tr(img, probs)  # still consumes both inputs at the interface
        assert out.shape == img.shape

    def test_spade_variant_has_spade_parameters(self):
        tr = make_translator(use_spade=True)
        spade_params = [n for n, _ in tr.named_parameters() if "spade" in n]
        assert spade_params
