"""Decoder-style generator: latent vector (plus optional class) to an image in [-1, 1].

The same conditioning vector modulates every normalization layer (no
hierarchical latent split). Unconditionally the vector is the latent z
itself (self-modulation); conditionally it is [z, class embedding].
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from pxgan.config import ModelConfig, num_resolution_stages
from pxgan.layers import UpBlock, channel_ladder, conv3x3, init_weights, linear


@dataclass
class LatentBatch:
    """Noise vectors and, when conditional, class indices."""

    z: torch.Tensor                     # N x latent_dim
    y: torch.Tensor | None = None       # N int64, present iff num_classes > 0

    def __post_init__(self):
        if self.z.ndim != 2:
            raise ValueError(f"z must be N x latent_dim, got shape {tuple(self.z.shape)}")
        if self.y is not None and self.y.shape[0] != self.z.shape[0]:
            raise ValueError("z and y batch sizes differ")


def sample_latent(n: int, cfg: ModelConfig, generator: torch.Generator,
                  dtype: torch.dtype = torch.float32) -> LatentBatch:
    """Draw a latent batch from the configured prior; advances ``generator``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if cfg.latent_distribution == "uniform_pm1":
        z = torch.rand(n, cfg.latent_dim, generator=generator, dtype=dtype) * 2.0 - 1.0
    elif cfg.latent_distribution == "standard_normal":
        z = torch.randn(n, cfg.latent_dim, generator=generator, dtype=dtype)
    else:
        raise ValueError(f"unknown latent_distribution {cfg.latent_distribution!r}")
    y = None
    if cfg.num_classes > 0:
        y = torch.randint(0, cfg.num_classes, (n,), generator=generator)
    return LatentBatch(z=z, y=y)


class Generator(nn.Module):
    """Residual upsampling network from a 4x4 bottleneck to the full image."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        sn = cfg.use_spectral_norm
        self.stages_count = num_resolution_stages(cfg.image_size)
        ladder = channel_ladder(self.stages_count)
        self.bottleneck_ch = 16 * cfg.ch

        self.conditional = cfg.num_classes > 0
        self.embed_dim = cfg.latent_dim if self.conditional else 0
        if self.conditional:
            # No spectral norm on the generator-side embedding.
            self.class_embed = nn.Embedding(cfg.num_classes, self.embed_dim)
        cond_dim = cfg.latent_dim + self.embed_dim

        self.linear = linear(cond_dim, self.bottleneck_ch * 4 * 4, sn)
        blocks = []
        in_ch = self.bottleneck_ch
        for mult in ladder:
            out_ch = mult * cfg.ch
            blocks.append(UpBlock(in_ch, out_ch, sn, cond_dim=cond_dim))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.out_bn = nn.BatchNorm2d(in_ch)
        self.out_conv = conv3x3(in_ch, cfg.channels, sn)
        init_weights(self)

    def conditioning(self, latents: LatentBatch) -> torch.Tensor:
        if self.conditional:
            if latents.y is None:
                raise ValueError("conditional generator needs class labels")
            return torch.cat([latents.z, self.class_embed(latents.y)], dim=1)
        if latents.y is not None:
            raise ValueError("unconditional generator got class labels")
        return latents.z

    def forward(self, latents: LatentBatch) -> torch.Tensor:
        cond = self.conditioning(latents)
        if cond.shape[1] != self.linear.in_features:
            raise ValueError(
                f"latent width {cond.shape[1]} does not match the network "
                f"({self.linear.in_features})"
            )
        h = self.linear(cond).view(cond.shape[0], self.bottleneck_ch, 4, 4)
        for block in self.blocks:
            h = block(h, cond)
        h = self.out_conv(F.relu(self.out_bn(h)))
        return torch.tanh(h)


def generate(net: Generator, latents: LatentBatch) -> torch.Tensor:
    """Forward pass returning an N x C x H x W batch in [-1, 1]."""
    return net(latents)


def parameter_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())
