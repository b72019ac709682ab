"""Distribution metrics: Frechet distance between feature Gaussians and an
Inception-style score with a pluggable backbone.

The bundled backbone is a small fixed-weight convolutional net whose
weights are generated from a pinned seed (digest exposed for pinning).
Scores computed with it are comparable across runs of this toolkit but NOT
against any published numbers, which use large pretrained classifiers.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

logger = logging.getLogger(__name__)


@dataclass
class FeatureGaussian:
    """Gaussian fit (mean, covariance, sample count) to a feature cloud."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.mu.ndim != 1 or self.sigma.shape != (self.mu.size, self.mu.size):
            raise ValueError("mu must be a d-vector and sigma d x d")


def _sqrt_eigvals_of_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Eigenvalues of (a b)^{1/2} via the symmetrized product sqrt(a) b sqrt(a).

    Tiny negative eigenvalues from roundoff are clamped to zero.
    """
    wa, va = np.linalg.eigh(a)
    wa = np.clip(wa, 0.0, None)
    sqrt_a = (va * np.sqrt(wa)) @ va.T
    m = sqrt_a @ b @ sqrt_a
    m = (m + m.T) / 2.0
    wm = np.linalg.eigvalsh(m)
    return np.sqrt(np.clip(wm, 0.0, None))


def frechet_distance(a: FeatureGaussian, b: FeatureGaussian) -> float:
    """||mu_a - mu_b||^2 + Tr(sigma_a + sigma_b - 2 (sigma_a sigma_b)^{1/2})."""
    if a.mu.shape != b.mu.shape:
        raise ValueError(f"dimension mismatch: {a.mu.shape} vs {b.mu.shape}")
    for g in (a, b):
        if not (np.all(np.isfinite(g.mu)) and np.all(np.isfinite(g.sigma))):
            raise ValueError("non-finite Gaussian parameters")
    diff = a.mu - b.mu
    trace_sqrt = float(np.sum(_sqrt_eigvals_of_product(a.sigma, b.sigma)))
    value = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * trace_sqrt)
    return max(value, 0.0)


def inception_style_score(probs: np.ndarray) -> float:
    """exp of the mean KL divergence between per-sample and marginal class distributions."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"probs must be N x K, got shape {probs.shape}")
    if np.any(probs < 0):
        raise ValueError("probabilities must be nonnegative")
    row_sums = probs.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        raise ValueError("rows must sum to 1 within 1e-6")
    marginal = probs.mean(axis=0)
    # p log(p/q) with the 0 log 0 = 0 convention
    ratio = np.where(probs > 0, probs / marginal, 1.0)
    kl_per_sample = np.sum(probs * np.log(ratio), axis=1)
    return float(np.exp(kl_per_sample.mean()))


class StreamingMoments:
    """One-pass mean/covariance accumulator (merge form of Welford's update)."""

    def __init__(self, dim: int):
        self.dim = dim
        self.n = 0
        self.mean = np.zeros(dim, dtype=np.float64)
        self.m2 = np.zeros((dim, dim), dtype=np.float64)

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.dim:
            raise ValueError(f"expected N x {self.dim} batch, got {batch.shape}")
        nb = batch.shape[0]
        if nb == 0:
            return
        mean_b = batch.mean(axis=0)
        centered = batch - mean_b
        m2_b = centered.T @ centered
        delta = mean_b - self.mean
        total = self.n + nb
        self.m2 += m2_b + np.outer(delta, delta) * (self.n * nb / total)
        self.mean += delta * (nb / total)
        self.n = total

    def gaussian(self) -> FeatureGaussian:
        if self.n < 2:
            raise ValueError("need at least 2 samples for a covariance")
        sigma = self.m2 / (self.n - 1)
        return FeatureGaussian(mu=self.mean.copy(), sigma=(sigma + sigma.T) / 2.0, n=self.n)


BACKBONE_SEED = 0x0F1D
BACKBONE_ID = "randconv-3x32-v1"


class FeatureExtractor(nn.Module):
    """Fixed random-weight conv pyramid for proxy features and class probabilities.

    Weights are drawn once from ``BACKBONE_SEED``; ``digest()`` fingerprints
    them so cached statistics can be checked for compatibility.
    """

    def __init__(self, channels: int = 3, num_classes: int = 10):
        super().__init__()
        gen = torch.Generator().manual_seed(BACKBONE_SEED)
        widths = [16, 32, 32]
        convs = []
        in_ch = channels
        for w in widths:
            conv = nn.Conv2d(in_ch, w, kernel_size=3, padding=1)
            fan_in = in_ch * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  * (2.0 / fan_in) ** 0.5)
                conv.bias.zero_()
            convs.append(conv)
            in_ch = w
        self.convs = nn.ModuleList(convs)
        self.feature_dim = widths[-1] * 4
        self.class_head = nn.Linear(self.feature_dim, num_classes)
        with torch.no_grad():
            self.class_head.weight.copy_(
                torch.randn(self.class_head.weight.shape, generator=gen)
                / self.feature_dim ** 0.5)
            self.class_head.bias.zero_()
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(BACKBONE_ID.encode())
        for name, p in sorted(self.state_dict().items()):
            h.update(name.encode())
            h.update(p.numpy().tobytes())
        return h.hexdigest()

    @torch.no_grad()
    def features(self, images: torch.Tensor) -> torch.Tensor:
        """Images in [-1, 1] -> N x feature_dim."""
        h = images
        for conv in self.convs:
            h = F.avg_pool2d(F.relu(conv(h)), 2)
        h = F.adaptive_avg_pool2d(h, 2)
        return h.flatten(1)

    @torch.no_grad()
    def class_probs(self, images: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.class_head(self.features(images)), dim=1)


def gaussian_from_batches(extractor: FeatureExtractor, image_iter) -> FeatureGaussian:
    moments = StreamingMoments(extractor.feature_dim)
    for batch in image_iter:
        moments.update(extractor.features(batch).numpy())
    return moments.gaussian()


def compute_fid(extractor: FeatureExtractor, real_images_iter, fake_images_iter,
                n_samples: int) -> float:
    """Stream both image sources through the extractor and compare the Gaussians.

    ``n_samples`` is the intended per-side count, used only to warn when the
    Gaussian fit is underdetermined (fewer samples than feature dims + 1).
    """
    if n_samples < extractor.feature_dim + 1:
        logger.warning(
            "FID with %d samples and %d feature dims is underdetermined; "
            "values remain comparable only at identical sample counts",
            n_samples, extractor.feature_dim)
    real = gaussian_from_batches(extractor, real_images_iter)
    fake = gaussian_from_batches(extractor, fake_images_iter)
    return frechet_distance(real, fake)
