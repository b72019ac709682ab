"""Rectangular real/fake mixing masks and the mixing schedule.

A mask M is 1 where the pixel comes from the real image and 0 where it
comes from the generated one. The zero region is a single axis-aligned
rectangle: a target real ratio r is drawn from U(0,1), the rectangle gets
side lengths h*sqrt(1-r) and w*sqrt(1-r) (rounded), its center is uniform
over the image, and it is clipped at the borders. Because clipping changes
the area, the stored ratio is always recomputed from the final mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch


@dataclass
class CutMixMask:
    """Binary H x W mask plus its exact real-area ratio."""

    m: torch.Tensor
    r: float = field(init=False)

    def __post_init__(self):
        if self.m.ndim != 2:
            raise ValueError(f"mask must be H x W, got shape {tuple(self.m.shape)}")
        # Never trust the sampler's target ratio; recompute from the mask.
        self.r = float(self.m.sum().item()) / float(self.m.numel())


@dataclass
class CutMixBatch:
    """Mixed images with their masks; globally every mixed image counts as fake."""

    images: torch.Tensor               # N x C x H x W
    masks: list[CutMixMask]
    enc_target: int = 0                # constant fake class

    def mask_tensor(self) -> torch.Tensor:
        return torch.stack([m.m for m in self.masks]).unsqueeze(1).to(self.images.dtype)


def mask_from_geometry(h: int, w: int, r: float, cy: int, cx: int,
                       dtype: torch.dtype = torch.float32) -> CutMixMask:
    """Deterministic mask kernel: cut rectangle of area ~(1-r)*h*w centered at (cy, cx)."""
    cut_scale = math.sqrt(max(0.0, 1.0 - r))
    cut_h = int(round(h * cut_scale))
    cut_w = int(round(w * cut_scale))
    y1 = min(max(cy - cut_h // 2, 0), h)
    y2 = min(max(cy + cut_h // 2, 0), h)
    x1 = min(max(cx - cut_w // 2, 0), w)
    x2 = min(max(cx + cut_w // 2, 0), w)
    m = torch.ones(h, w, dtype=dtype)
    m[y1:y2, x1:x2] = 0.0
    return CutMixMask(m=m)


def sample_mask(h: int, w: int, generator: torch.Generator,
                dtype: torch.dtype = torch.float32) -> CutMixMask:
    if h < 1 or w < 1:
        raise ValueError(f"mask dimensions must be >= 1, got {h} x {w}")
    r = float(torch.rand((), generator=generator).item())
    cy = int(torch.randint(0, h, (), generator=generator).item())
    cx = int(torch.randint(0, w, (), generator=generator).item())
    return mask_from_geometry(h, w, r, cy, cx, dtype=dtype)


def _as_mask_tensor(masks, like: torch.Tensor) -> torch.Tensor:
    if isinstance(masks, torch.Tensor):
        t = masks
    else:
        t = torch.stack([m.m for m in masks]).unsqueeze(1)
    return t.to(like.dtype)


def mix(x: torch.Tensor, g: torch.Tensor, masks) -> torch.Tensor:
    """Elementwise blend M*x + (1-M)*g; masks broadcast over channels."""
    if x.shape != g.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(g.shape)}")
    m = _as_mask_tensor(masks, x)
    if m.shape[0] != x.shape[0] or m.shape[-2:] != x.shape[-2:]:
        raise ValueError(
            f"mask batch {tuple(m.shape)} does not match images {tuple(x.shape)}"
        )
    return m * x + (1.0 - m) * g


def mix_maps(a: torch.Tensor, b: torch.Tensor, masks) -> torch.Tensor:
    """Same blend applied to per-pixel score maps (N x 1 x H x W)."""
    return mix(a, b, masks)


def pmix_schedule(epoch: float, warmup_epochs: int, pmix_max: float) -> float:
    """Probability of a CutMix step: linear 0 -> pmix_max over the warm-up epochs."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return min(pmix_max, pmix_max * epoch / warmup_epochs)


def build_cutmix_batch(x: torch.Tensor, g: torch.Tensor,
                       generator: torch.Generator,
                       y_real: torch.Tensor | None = None,
                       y_fake: torch.Tensor | None = None) -> CutMixBatch:
    """Mix real sample i with fake sample i under a fresh mask each.

    In conditional mode both label vectors must be given and must agree
    pairwise: mixing only ever happens within a class.
    """
    if x.shape != g.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(g.shape)}")
    if (y_real is None) != (y_fake is None):
        raise ValueError("provide both label vectors or neither")
    if y_real is not None and not torch.equal(y_real, y_fake):
        raise ValueError("within-class mixing violated: real/fake pair labels differ")
    n, _, h, w = x.shape
    masks = [sample_mask(h, w, generator, dtype=x.dtype) for _ in range(n)]
    return CutMixBatch(images=mix(x, g, masks), masks=masks)
