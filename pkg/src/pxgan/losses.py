"""Adversarial objectives for both discriminator heads.

Non-saturating terms are computed with softplus identities so no
intermediate sigmoid/log can overflow: -log sigmoid(x) = softplus(-x) and
-log(1 - sigmoid(x)) = softplus(x). Hinge terms are the usual
max(0, 1 -/+ logit) margins. Per-pixel terms use the pixel MEAN (not sum)
so the encoder and decoder heads contribute on the same scale and can be
weighted equally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from pxgan.cutmix import mix_maps

VARIANTS = ("non_saturating", "hinge")


def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise ValueError(f"unknown adversarial variant {variant!r}")


@dataclass
class DiscriminatorLossBreakdown:
    """Per-term discriminator loss record; ``total`` is derived, never passed in."""

    enc_term: float
    dec_term: float
    cutmix_enc_term: float
    cutmix_dec_term: float
    consistency_term: float
    lambda_weight: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = (self.enc_term + self.dec_term + self.cutmix_enc_term
                      + self.cutmix_dec_term + self.lambda_weight * self.consistency_term)


@dataclass
class GeneratorLossBreakdown:
    enc_term: float
    dec_term: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.enc_term + self.dec_term


def enc_d_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor,
               variant: str) -> torch.Tensor:
    """Discriminator loss on per-image logits (real should score high, fake low)."""
    _check_variant(variant)
    if variant == "non_saturating":
        return F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()
    return F.relu(1.0 - real_logits).mean() + F.relu(1.0 + fake_logits).mean()


def dec_d_loss(real_maps: torch.Tensor, fake_maps: torch.Tensor,
               variant: str) -> torch.Tensor:
    """Same objective applied per pixel, averaged over pixels and the batch."""
    _check_variant(variant)
    if variant == "non_saturating":
        return F.softplus(-real_maps).mean() + F.softplus(fake_maps).mean()
    return F.relu(1.0 - real_maps).mean() + F.relu(1.0 + fake_maps).mean()


def g_loss(fake_enc_logits: torch.Tensor, fake_dec_maps: torch.Tensor | None,
           variant: str, include_decoder: bool = True) -> tuple[torch.Tensor, torch.Tensor]:
    """Generator loss terms (enc_term, dec_term), weighted equally by the caller.

    ``include_decoder=False`` (encoder-only ablation) returns a zero decoder
    term that carries no gradient.
    """
    _check_variant(variant)
    if variant == "non_saturating":
        enc_term = F.softplus(-fake_enc_logits).mean()
    else:
        enc_term = -fake_enc_logits.mean()
    if not include_decoder:
        return enc_term, torch.zeros((), dtype=fake_enc_logits.dtype)
    if variant == "non_saturating":
        dec_term = F.softplus(-fake_dec_maps).mean()
    else:
        dec_term = -fake_dec_maps.mean()
    return enc_term, dec_term


def consistency_loss(dec_on_mixed: torch.Tensor, dec_on_real: torch.Tensor,
                     dec_on_fake: torch.Tensor, masks) -> torch.Tensor:
    """Squared L2 distance between the decoder's answer on the mixed image and
    the identically mixed decoder answers on the sources, on sigmoid outputs,
    averaged over the batch."""
    if dec_on_mixed.shape != dec_on_real.shape or dec_on_mixed.shape != dec_on_fake.shape:
        raise ValueError("decoder map shapes differ")
    predicted = torch.sigmoid(dec_on_mixed)
    target = mix_maps(torch.sigmoid(dec_on_real), torch.sigmoid(dec_on_fake), masks)
    per_sample = ((predicted - target) ** 2).sum(dim=(1, 2, 3))
    return per_sample.mean()


def cutmix_supervision_loss(enc_logits_on_mixed: torch.Tensor,
                            dec_maps_on_mixed: torch.Tensor, masks,
                            variant: str) -> tuple[torch.Tensor, torch.Tensor]:
    """Supervised terms for a CutMix batch.

    The encoder must call every mixed image fake; the decoder must classify
    each pixel against the mask (1 = came from the real image).
    """
    _check_variant(variant)
    if isinstance(masks, torch.Tensor):
        m = masks.to(dec_maps_on_mixed.dtype)
    else:
        m = torch.stack([mk.m for mk in masks]).unsqueeze(1).to(dec_maps_on_mixed.dtype)
    logits = dec_maps_on_mixed
    if variant == "non_saturating":
        enc_term = F.softplus(enc_logits_on_mixed).mean()
        dec_term = (m * F.softplus(-logits) + (1.0 - m) * F.softplus(logits)).mean()
    else:
        enc_term = F.relu(1.0 + enc_logits_on_mixed).mean()
        dec_term = (m * F.relu(1.0 - logits) + (1.0 - m) * F.relu(1.0 + logits)).mean()
    return enc_term, dec_term


def vanilla_losses(real_logit: torch.Tensor,
                   fake_logit: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Single-head non-saturating baseline: (L_D, L_G) as batch means."""
    loss_d = F.softplus(-real_logit).mean() + F.softplus(fake_logit).mean()
    loss_g = F.softplus(-fake_logit).mean()
    return loss_d, loss_g
