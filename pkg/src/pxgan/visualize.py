"""Diagnostic renderings: per-pixel heatmaps, score scatter, CutMix panels, curves.

The heatmap grid is written with exact pixel control (numpy -> PNG, no
resampling): row 0 holds the samples, row 1 the decoder sigmoid maps with
intensity round(255 * p), using a fixed [0, 1] -> grayscale mapping rather
than per-image normalization.
"""

from __future__ import annotations

import json

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
import torch
from PIL import Image

from pxgan.cutmix import build_cutmix_batch
from pxgan.discriminator import UNetDiscriminator, mean_pixel_score
from pxgan.generator import Generator, LatentBatch


def _to_uint8_image(x: torch.Tensor) -> np.ndarray:
    """[-1, 1] C x H x W tensor -> H x W x 3 uint8."""
    arr = x.detach().numpy()
    arr = np.rint(255.0 * (arr + 1.0) / 2.0)
    arr = np.clip(arr, 0, 255).astype(np.uint8).transpose(1, 2, 0)
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    return arr


def _map_to_uint8(probs: torch.Tensor) -> np.ndarray:
    """[0, 1] 1 x H x W map -> H x W x 3 grayscale uint8 (fixed scale)."""
    arr = np.rint(255.0 * probs.detach().numpy()[0])
    arr = np.clip(arr, 0, 255).astype(np.uint8)
    return np.stack([arr, arr, arr], axis=2)


@torch.no_grad()
def render_decoder_heatmaps(generator: Generator, discriminator: UNetDiscriminator,
                            z_batch: torch.Tensor, out_path: str,
                            y_classes: int = 0) -> np.ndarray:
    """Save a (2 rows) x (N columns) tile grid: samples above their decoder maps.

    The discriminator is run in eval mode (and restored) so rendering never
    mutates its normalization statistics mid-training. Returns the saved
    uint8 array.
    """
    n = z_batch.shape[0]
    y = torch.arange(n) % y_classes if y_classes > 0 else None
    samples = generator(LatentBatch(z=z_batch, y=y))

    was_training = discriminator.training
    discriminator.eval()
    try:
        score = discriminator(samples, y)
    finally:
        discriminator.train(was_training)
    probs = torch.sigmoid(score.dec_logits)

    h, w = samples.shape[2], samples.shape[3]
    grid = np.zeros((2 * h, n * w, 3), dtype=np.uint8)
    for i in range(n):
        grid[:h, i * w:(i + 1) * w] = _to_uint8_image(samples[i])
        grid[h:, i * w:(i + 1) * w] = _map_to_uint8(probs[i])
    Image.fromarray(grid).save(out_path)
    return grid


@torch.no_grad()
def render_enc_dec_scatter(discriminator: UNetDiscriminator, fake_batch: torch.Tensor,
                           out_path: str, y: torch.Tensor | None = None
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Scatter of (encoder sigmoid score, mean decoder pixel score), one point per sample.

    Returns the plotted coordinate arrays.
    """
    was_training = discriminator.training
    discriminator.eval()
    try:
        score = discriminator(fake_batch, y)
    finally:
        discriminator.train(was_training)
    enc_scores = torch.sigmoid(score.enc_logit).numpy()
    dec_scores = mean_pixel_score(score).numpy()

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(enc_scores, dec_scores, s=18, alpha=0.7)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("per-image score (encoder head)")
    ax.set_ylabel("mean per-pixel score (decoder head)")
    ax.plot([0, 1], [0, 1], lw=0.5, color="gray")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return enc_scores, dec_scores


@torch.no_grad()
def render_cutmix_panel(real: torch.Tensor, fake: torch.Tensor,
                        discriminator: UNetDiscriminator, out_path: str,
                        generator_rng: torch.Generator,
                        y: torch.Tensor | None = None) -> dict:
    """Panel per sample: real, fake, mask (with ratio r), mixed image, decoder map
    with the encoder score. Returns the panel data for verification."""
    cm = build_cutmix_batch(real, fake, generator_rng, y_real=y, y_fake=y)
    was_training = discriminator.training
    discriminator.eval()
    try:
        score = discriminator(cm.images, y)
    finally:
        discriminator.train(was_training)
    probs = torch.sigmoid(score.dec_logits)
    enc_scores = torch.sigmoid(score.enc_logit).numpy()

    n = real.shape[0]
    rows = ["real", "fake", "mask", "mixed", "decoder map"]
    fig, axes = plt.subplots(len(rows), n, figsize=(1.6 * n, 1.6 * len(rows)))
    axes = np.atleast_2d(axes)
    for i in range(n):
        axes[0, i].imshow(_to_uint8_image(real[i]))
        axes[1, i].imshow(_to_uint8_image(fake[i]))
        axes[2, i].imshow(cm.masks[i].m.numpy(), cmap="gray", vmin=0, vmax=1)
        axes[2, i].set_title(f"r={cm.masks[i].r:.2f}", fontsize=8)
        axes[3, i].imshow(_to_uint8_image(cm.images[i]))
        axes[4, i].imshow(probs[i, 0].numpy(), cmap="gray", vmin=0, vmax=1)
        axes[4, i].set_title(f"enc={enc_scores[i]:.2f}", fontsize=8)
    for ax in axes.ravel():
        ax.set_xticks([])
        ax.set_yticks([])
    for j, label in enumerate(rows):
        axes[j, 0].set_ylabel(label, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return {"r": [m.r for m in cm.masks], "enc_scores": enc_scores,
            "masks": cm.masks, "mixed": cm.images}


def _read_metrics(metrics_path: str) -> list[dict]:
    records = []
    with open(metrics_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def render_fid_curve(metrics_path: str, out_path: str) -> tuple[list[int], list[float]]:
    """Proxy-FID over iterations; returns the plotted (x, y) series."""
    records = [r for r in _read_metrics(metrics_path) if r.get("type") == "eval"]
    xs = [r["iteration"] for r in records]
    ys = [r["fid"] for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel("iteration")
    ax.set_ylabel("proxy-FID")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return xs, ys


def render_loss_curves(metrics_path: str, out_path: str) -> list[int]:
    """Per-head generator/discriminator loss components over iterations."""
    records = [r for r in _read_metrics(metrics_path) if r.get("type") == "train"]
    xs = [r["iteration"] for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, label in (("d_total", "D total"), ("d_enc", "D enc"), ("d_dec", "D dec"),
                       ("g_total", "G total"), ("g_enc", "G enc"), ("g_dec", "G dec")):
        ax.plot(xs, [r["losses"][key] for r in records], label=label, lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return xs
