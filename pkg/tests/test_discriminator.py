import math

import pytest
import torch

from pxgan.config import ModelConfig
from pxgan.discriminator import (
    DualScore,
    UNetDiscriminator,
    decoder_probability_map,
    discriminate,
    mean_pixel_score,
)


def small_cfg(**kw) -> ModelConfig:
    base = dict(image_size=16, ch=2, latent_dim=8, num_classes=0)
    base.update(kw)
    return ModelConfig(**base)


@pytest.mark.parametrize("image_size", [16, 32, 64])
def test_dual_output_shapes(image_size):
    torch.manual_seed(0)
    cfg = small_cfg(image_size=image_size)
    net = UNetDiscriminator(cfg)
    x = torch.randn(2, 3, image_size, image_size)
    score = discriminate(net, x)
    assert score.enc_logit.shape == (2,)
    assert score.dec_logits.shape == (2, 1, image_size, image_size)
    assert torch.isfinite(score.enc_logit).all()
    assert torch.isfinite(score.dec_logits).all()


def test_rejects_wrong_input_shape():
    net = UNetDiscriminator(small_cfg())
    with pytest.raises(ValueError):
        net(torch.randn(2, 3, 8, 8))


def test_batch_permutation_equivariance():
    torch.manual_seed(1)
    net = UNetDiscriminator(small_cfg()).eval()
    x = torch.randn(5, 3, 16, 16)
    perm = torch.tensor([3, 0, 4, 1, 2])
    with torch.no_grad():
        base = net(x)
        shuffled = net(x[perm])
    assert torch.allclose(base.enc_logit[perm], shuffled.enc_logit, atol=1e-6)
    assert torch.allclose(base.dec_logits[perm], shuffled.dec_logits, atol=1e-6)


def test_decoder_probability_map_values():
    logits = torch.zeros(1, 1, 2, 2)
    logits[0, 0, 0, 0] = 20.0
    logits[0, 0, 0, 1] = -20.0
    score = DualScore(enc_logit=torch.zeros(1), dec_logits=logits)
    probs = decoder_probability_map(score)
    assert probs[0, 0, 1, 1].item() == 0.5
    assert probs[0, 0, 0, 0].item() >= 0.999999
    assert probs[0, 0, 0, 1].item() <= 1e-6


def test_decoder_probability_map_matches_scalar_oracle(rng):
    logits = torch.randn(1, 1, 4, 4, generator=rng, dtype=torch.float64)
    score = DualScore(enc_logit=torch.zeros(1, dtype=torch.float64), dec_logits=logits)
    probs = decoder_probability_map(score)
    for i in range(4):
        for j in range(4):
            want = 1.0 / (1.0 + math.exp(-logits[0, 0, i, j].item()))
            assert abs(probs[0, 0, i, j].item() - want) < 1e-12


def test_mean_pixel_score_cases(rng):
    const = DualScore(enc_logit=torch.zeros(2),
                      dec_logits=torch.zeros(2, 1, 8, 8))
    assert torch.allclose(mean_pixel_score(const), torch.full((2,), 0.5))

    half = torch.full((1, 1, 8, 8), -50.0)
    half[:, :, :4, :] = 50.0
    split = DualScore(enc_logit=torch.zeros(1), dec_logits=half)
    assert abs(mean_pixel_score(split).item() - 0.5) < 1e-6

    maps = torch.randn(1, 1, 8, 8, generator=rng, dtype=torch.float64)
    got = mean_pixel_score(DualScore(enc_logit=torch.zeros(1, dtype=torch.float64),
                                     dec_logits=maps)).item()
    want = 0.0
    for i in range(8):
        for j in range(8):
            want += 1.0 / (1.0 + math.exp(-maps[0, 0, i, j].item()))
    want /= 64
    assert abs(got - want) < 1e-12


def test_encoder_head_independent_of_decoder_parameters():
    torch.manual_seed(2)
    net = UNetDiscriminator(small_cfg())
    x = torch.randn(3, 3, 16, 16)
    score = net(x)
    score.enc_logit.sum().backward()
    for name, param in net.named_parameters():
        if name.startswith(("dec_blocks", "dec_conv", "dec_embed")):
            assert param.grad is None or torch.all(param.grad == 0), name
        if name.startswith("enc_blocks"):
            assert param.grad is not None and param.grad.abs().sum() > 0, name


def test_skip_connections_are_wired():
    torch.manual_seed(3)
    net = UNetDiscriminator(small_cfg(image_size=32)).eval()
    x = torch.randn(4, 3, 32, 32)
    with torch.no_grad():
        with_skips = net(x)
        without = net(x, zero_skips=True)
    assert torch.equal(with_skips.enc_logit, without.enc_logit)  # encoder path unchanged
    assert not torch.allclose(with_skips.dec_logits, without.dec_logits, atol=1e-3)


def test_spectral_norm_bound_after_power_iteration():
    torch.manual_seed(4)
    cfg = small_cfg(use_spectral_norm=True)
    net = UNetDiscriminator(cfg)
    # perturb away from the orthogonal init so the bound is non-trivial
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name.endswith("weight_orig"):
                p.add_(0.3 * torch.randn(p.shape))
    x = torch.randn(2, 3, 16, 16)
    with torch.no_grad():
        for _ in range(200):  # converge the power iterations on frozen weights
            net(x)
    net.eval()
    checked = 0
    for module in net.modules():
        if hasattr(module, "weight_orig"):
            weight = getattr(module, "weight")  # normalized by the pre-forward hook value
            mat = weight.detach().reshape(weight.shape[0], -1)
            sigma = torch.linalg.svdvals(mat)[0].item()
            assert sigma <= 1.0 + 1e-3, (module, sigma)
            checked += 1
    assert checked >= 10


def test_conditional_projection_heads():
    torch.manual_seed(5)
    cfg = small_cfg(num_classes=3)
    net = UNetDiscriminator(cfg).eval()
    x = torch.randn(4, 3, 16, 16)
    y = torch.tensor([0, 1, 2, 0])
    with torch.no_grad():
        score = net(x, y)
        other = net(x, torch.tensor([1, 2, 0, 1]))
    assert score.enc_logit.shape == (4,)
    # class changes move both heads (projection terms active)
    assert not torch.allclose(score.enc_logit, other.enc_logit)
    assert not torch.allclose(score.dec_logits, other.dec_logits)
    with pytest.raises(ValueError):
        net(x)  # labels required
    with pytest.raises(ValueError):
        UNetDiscriminator(small_cfg())(x, y)  # labels rejected


def test_describe_lists_all_stages():
    net = UNetDiscriminator(small_cfg(image_size=64, ch=16))
    text = net.describe()
    assert text.count("down") == 4
    assert text.count("up") == 4
    assert "global sum pool" in text
    assert "1x1 conv" in text
    # bottleneck channels are 16 * ch
    assert "256" in text


def test_decoder_input_gradient_matches_finite_differences():
    from fdcheck import check_input_gradient

    torch.manual_seed(6)
    cfg = ModelConfig(image_size=8, ch=4, latent_dim=6, num_classes=0)
    net = UNetDiscriminator(cfg).double()
    x = torch.randn(2, 3, 8, 8, dtype=torch.float64,
                    generator=torch.Generator().manual_seed(7))
    with torch.no_grad():
        for _ in range(5):
            net(x)
    net.eval()
    check_input_gradient(lambda: net(x).dec_logits.mean(), x, probes=10)


def test_discriminator_parameter_gradients_match_finite_differences():
    from fdcheck import check_parameter_gradients

    torch.manual_seed(8)
    cfg = ModelConfig(image_size=8, ch=4, latent_dim=6, num_classes=0)
    net = UNetDiscriminator(cfg).double()
    x = torch.randn(2, 3, 8, 8, dtype=torch.float64,
                    generator=torch.Generator().manual_seed(9))
    proj = torch.randn(2, 1, 8, 8, dtype=torch.float64,
                       generator=torch.Generator().manual_seed(10))
    with torch.no_grad():
        for _ in range(5):
            net(x)
    net.eval()

    def scalar():
        score = net(x)
        return score.enc_logit.sum() + (score.dec_logits * proj).sum()

    check_parameter_gradients(scalar, list(net.named_parameters()), min_checked=15)
