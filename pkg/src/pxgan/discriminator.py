"""Two-headed U-Net discriminator.

The encoder is a residual downsampling stack ending in a 16*ch x 4 x 4
bottleneck; a ReLU -> global sum pool -> linear head turns it into one
per-image logit. The decoder mirrors the encoder back up to full
resolution, concatenating the encoder feature map at each matching
resolution, and a 1x1 convolution head emits one logit per pixel. Both
heads are always computed. With classes, projection terms (inner product
of a learned class embedding with the pre-head features) are added to both
heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from pxgan.config import ModelConfig, num_resolution_stages
from pxgan.layers import DownBlock, UpBlock, channel_ladder, conv1x1, embedding, init_weights, linear


@dataclass
class DualScore:
    """Paired discriminator outputs for one batch."""

    enc_logit: torch.Tensor    # N
    dec_logits: torch.Tensor   # N x 1 x H x W

    def __post_init__(self):
        if self.enc_logit.ndim != 1:
            raise ValueError(f"enc_logit must be 1-D, got shape {tuple(self.enc_logit.shape)}")
        if self.dec_logits.ndim != 4 or self.dec_logits.shape[1] != 1:
            raise ValueError(
                f"dec_logits must be N x 1 x H x W, got shape {tuple(self.dec_logits.shape)}"
            )
        if self.dec_logits.shape[0] != self.enc_logit.shape[0]:
            raise ValueError("enc_logit and dec_logits batch sizes differ")


class UNetDiscriminator(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        sn = cfg.use_spectral_norm
        stages = num_resolution_stages(cfg.image_size)
        self.stages_count = stages

        # Encoder multipliers are the generator ladder mirrored, with the
        # bottleneck pinned at 16; the decoder mirrors the encoder back.
        ladder = channel_ladder(stages)
        enc_mults = list(reversed(ladder))
        enc_mults[-1] = 16
        dec_mults = list(reversed(enc_mults[:-1])) + [1]
        self.enc_mults = enc_mults
        self.dec_mults = dec_mults

        enc_blocks = []
        in_ch = cfg.channels
        for i, mult in enumerate(enc_mults):
            enc_blocks.append(DownBlock(in_ch, mult * cfg.ch, sn, preactivation=i > 0))
            in_ch = mult * cfg.ch
        self.enc_blocks = nn.ModuleList(enc_blocks)

        self.bottleneck_ch = 16 * cfg.ch
        self.enc_linear = linear(self.bottleneck_ch, 1, sn)

        dec_blocks = []
        in_ch = self.bottleneck_ch
        for j, mult in enumerate(dec_mults):
            if j > 0:
                in_ch = dec_mults[j - 1] * cfg.ch + enc_mults[stages - 1 - j] * cfg.ch
            dec_blocks.append(UpBlock(in_ch, mult * cfg.ch, sn, cond_dim=None))
        self.dec_blocks = nn.ModuleList(dec_blocks)
        self.dec_conv = conv1x1(dec_mults[-1] * cfg.ch, 1, sn)

        self.conditional = cfg.num_classes > 0
        if self.conditional:
            self.enc_embed = embedding(cfg.num_classes, self.bottleneck_ch, sn)
            self.dec_embed = embedding(cfg.num_classes, dec_mults[-1] * cfg.ch, sn)
        init_weights(self)

    def forward(self, x: torch.Tensor, y: torch.Tensor | None = None,
                zero_skips: bool = False) -> DualScore:
        """Score a batch both per image and per pixel.

        ``zero_skips`` zeroes the concatenated encoder features (used by
        tests to confirm the skip connections are actually wired).
        """
        if x.ndim != 4 or x.shape[1] != self.cfg.channels or x.shape[2] != self.cfg.image_size \
                or x.shape[3] != self.cfg.image_size:
            raise ValueError(
                f"expected N x {self.cfg.channels} x {self.cfg.image_size} x "
                f"{self.cfg.image_size} input, got {tuple(x.shape)}"
            )
        if self.conditional and y is None:
            raise ValueError("conditional discriminator needs class labels")
        if not self.conditional and y is not None:
            raise ValueError("unconditional discriminator got class labels")

        feats = []
        h = x
        for block in self.enc_blocks:
            h = block(h)
            feats.append(h)
        bottleneck = h

        pooled = torch.sum(F.relu(bottleneck), dim=(2, 3))
        enc_logit = self.enc_linear(pooled).squeeze(1)
        if self.conditional:
            enc_logit = enc_logit + torch.sum(self.enc_embed(y) * pooled, dim=1)

        h = bottleneck
        for j, block in enumerate(self.dec_blocks):
            if j > 0:
                skip = feats[self.stages_count - 1 - j]
                if zero_skips:
                    skip = torch.zeros_like(skip)
                h = torch.cat([h, skip], dim=1)
            h = block(h)
        dec_logits = self.dec_conv(h)
        if self.conditional:
            emb = self.dec_embed(y).unsqueeze(-1).unsqueeze(-1)
            dec_logits = dec_logits + torch.sum(emb * h, dim=1, keepdim=True)

        return DualScore(enc_logit=enc_logit, dec_logits=dec_logits)

    def describe(self) -> str:
        """Human-readable stage table: resolution and channel flow of both paths."""
        ch = self.cfg.ch
        size = self.cfg.image_size
        rows = [f"input: {self.cfg.channels} x {size} x {size}"]
        res = size
        in_ch = self.cfg.channels
        for mult in self.enc_mults:
            rows.append(f"  down {res:>4} -> {res // 2:<4}  {in_ch} -> {mult * ch}")
            res //= 2
            in_ch = mult * ch
        rows.append(f"encoder head: ReLU, global sum pool, linear {self.bottleneck_ch} -> 1"
                    + (" (+ class projection)" if self.conditional else ""))
        for j, mult in enumerate(self.dec_mults):
            if j == 0:
                width = f"{self.bottleneck_ch}"
            else:
                skip = self.enc_mults[self.stages_count - 1 - j] * ch
                width = f"{self.dec_mults[j - 1] * ch}+{skip}"
            rows.append(f"  up   {res:>4} -> {res * 2:<4}  {width} -> {mult * ch}")
            res *= 2
        rows.append(f"decoder head: 1x1 conv {self.dec_mults[-1] * ch} -> 1"
                    + (" (+ per-pixel class projection)" if self.conditional else ""))
        return "\n".join(rows)


def discriminate(net: UNetDiscriminator, images: torch.Tensor,
                 y: torch.Tensor | None = None) -> DualScore:
    return net(images, y)


def decoder_probability_map(score: DualScore) -> torch.Tensor:
    """Elementwise sigmoid of the per-pixel logits: N x 1 x H x W in [0, 1]."""
    return torch.sigmoid(score.dec_logits)


def mean_pixel_score(score: DualScore) -> torch.Tensor:
    """Per-sample spatial mean of the decoder sigmoid probabilities."""
    return torch.sigmoid(score.dec_logits).mean(dim=(1, 2, 3))
