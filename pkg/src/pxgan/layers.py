"""Residual building blocks shared by the generator and the discriminator.

Up blocks: norm -> ReLU -> nearest 2x upsample -> 3x3 conv, twice, with a
1x1 shortcut when the channel count changes. Down blocks: pre-activation
ReLU -> 3x3 conv -> ReLU -> 3x3 conv -> average pool, with a 1x1 shortcut.
Spectral normalization is optional on every conv/linear/embedding weight.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils import spectral_norm


def conv3x3(in_ch: int, out_ch: int, sn: bool) -> nn.Conv2d:
    conv = nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1)
    return spectral_norm(conv) if sn else conv


def conv1x1(in_ch: int, out_ch: int, sn: bool) -> nn.Conv2d:
    conv = nn.Conv2d(in_ch, out_ch, kernel_size=1, padding=0)
    return spectral_norm(conv) if sn else conv


def linear(in_f: int, out_f: int, sn: bool, bias: bool = True) -> nn.Linear:
    lin = nn.Linear(in_f, out_f, bias=bias)
    return spectral_norm(lin) if sn else lin


def embedding(num: int, dim: int, sn: bool) -> nn.Embedding:
    emb = nn.Embedding(num, dim)
    return spectral_norm(emb) if sn else emb


def init_weights(module: nn.Module) -> None:
    """Orthogonal init on conv/linear/embedding weights (spectral-norm aware)."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear, nn.Embedding)):
            weight = getattr(m, "weight_orig", None)
            if weight is None:
                weight = m.weight
            nn.init.orthogonal_(weight)
            if getattr(m, "bias", None) is not None:
                nn.init.zeros_(m.bias)


class ModulatedBatchNorm2d(nn.Module):
    """Batch norm whose affine scale/shift are linear functions of a conditioning vector.

    Unconditional nets condition on the latent vector itself; conditional
    nets condition on [latent, class embedding]. The modulation is a single
    linear map (no hidden layer): gain = 1 + W_g v, bias = W_b v.
    """

    def __init__(self, num_features: int, cond_dim: int, sn: bool, eps: float = 1e-5,
                 momentum: float = 0.1):
        super().__init__()
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gain = linear(cond_dim, num_features, sn, bias=False)
        self.bias = linear(cond_dim, num_features, sn, bias=False)
        self.register_buffer("running_mean", torch.zeros(num_features))
        self.register_buffer("running_var", torch.ones(num_features))

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        out = F.batch_norm(x, self.running_mean, self.running_var, None, None,
                           self.training, self.momentum, self.eps)
        gain = (1.0 + self.gain(cond)).unsqueeze(-1).unsqueeze(-1)
        bias = self.bias(cond).unsqueeze(-1).unsqueeze(-1)
        return out * gain + bias


class UpBlock(nn.Module):
    """Residual 2x upsampling block.

    With ``cond_dim`` set, both norms are modulated by the conditioning
    vector (generator use); with ``cond_dim=None`` plain batch norm is used
    (discriminator decoder use, which carries no conditioning vector).
    """

    def __init__(self, in_ch: int, out_ch: int, sn: bool, cond_dim: int | None = None,
                 upsample: bool = True):
        super().__init__()
        self.upsample = upsample
        self.conditional = cond_dim is not None
        if self.conditional:
            self.bn1 = ModulatedBatchNorm2d(in_ch, cond_dim, sn)
            self.bn2 = ModulatedBatchNorm2d(out_ch, cond_dim, sn)
        else:
            self.bn1 = nn.BatchNorm2d(in_ch)
            self.bn2 = nn.BatchNorm2d(out_ch)
        self.conv1 = conv3x3(in_ch, out_ch, sn)
        self.conv2 = conv3x3(out_ch, out_ch, sn)
        self.learnable_sc = in_ch != out_ch
        if self.learnable_sc:
            self.conv_sc = conv1x1(in_ch, out_ch, sn)

    def _up(self, x: torch.Tensor) -> torch.Tensor:
        return F.interpolate(x, scale_factor=2, mode="nearest") if self.upsample else x

    def forward(self, x: torch.Tensor, cond: torch.Tensor | None = None) -> torch.Tensor:
        h = self.bn1(x, cond) if self.conditional else self.bn1(x)
        h = F.relu(h)
        h = self.conv1(self._up(h))
        h = self.bn2(h, cond) if self.conditional else self.bn2(h)
        h = self.conv2(F.relu(h))
        sc = self._up(x)
        if self.learnable_sc:
            sc = self.conv_sc(sc)
        return h + sc


class DownBlock(nn.Module):
    """Residual 2x downsampling block with average pooling.

    The first block of the encoder takes the raw image and skips the
    pre-activation (``preactivation=False``); its shortcut pools before the
    1x1 conv instead of after.
    """

    def __init__(self, in_ch: int, out_ch: int, sn: bool, preactivation: bool = True,
                 downsample: bool = True):
        super().__init__()
        self.preactivation = preactivation
        self.downsample = downsample
        self.conv1 = conv3x3(in_ch, out_ch, sn)
        self.conv2 = conv3x3(out_ch, out_ch, sn)
        self.learnable_sc = in_ch != out_ch or downsample
        if self.learnable_sc:
            self.conv_sc = conv1x1(in_ch, out_ch, sn)

    def _pool(self, x: torch.Tensor) -> torch.Tensor:
        return F.avg_pool2d(x, 2) if self.downsample else x

    def shortcut(self, x: torch.Tensor) -> torch.Tensor:
        if self.preactivation:
            if self.learnable_sc:
                x = self.conv_sc(x)
            return self._pool(x)
        x = self._pool(x)
        if self.learnable_sc:
            x = self.conv_sc(x)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(x) if self.preactivation else x
        h = self.conv1(h)
        h = self.conv2(F.relu(h))
        h = self._pool(h)
        return h + self.shortcut(x)


def channel_ladder(stages: int) -> list[int]:
    """Per-stage output channel multipliers from the 4x4 bottleneck outward.

    Five or more stages follow the reference pattern 16 -> (8...) -> 8 -> 4
    -> 2 -> 1; fewer stages truncate it from the bottleneck side (the first
    block absorbs the jump from the fixed 16x bottleneck).
    """
    if stages < 1:
        raise ValueError(f"need at least one stage, got {stages}")
    if stages >= 5:
        return [16] + [8] * (stages - 5) + [8, 4, 2, 1]
    return [8, 4, 2, 1][4 - stages:]
