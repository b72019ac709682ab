"""Dataset ingestion and synthetic desk-scale data.

Images are kept as a single float32 tensor in [-1, 1] (matching the
generator's tanh output). Folder ingestion is deterministic: sorted paths,
center crop, bilinear resize. The synthetic dataset renders colored
geometric shapes (one shape type per class) and is fully seeded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")

SHAPE_NAMES = ("circle", "square", "triangle", "ring", "diamond",
               "cross", "hbar", "vbar", "frame", "dots")


@dataclass
class Dataset:
    images: torch.Tensor                 # N x C x H x W, float32 in [-1, 1]
    labels: torch.Tensor | None          # N int64, present iff num_classes > 0
    image_size: int
    num_classes: int

    def __len__(self) -> int:
        return self.images.shape[0]

    def class_counts(self) -> dict[int, int]:
        if self.labels is None:
            return {}
        values, counts = torch.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


@dataclass
class Batch:
    images: torch.Tensor
    y: torch.Tensor | None
    # label -> positions within this batch; used for within-class CutMix pairing
    class_groups: dict[int, list[int]] | None


def _load_one(path: Path, image_size: int, channels: int) -> torch.Tensor:
    img = Image.open(path)
    img = img.convert("RGB" if channels == 3 else "L")
    w, h = img.size
    side = min(w, h)
    left = (w - side) // 2
    top = (h - side) // 2
    img = img.crop((left, top, left + side, top + side))
    img = img.resize((image_size, image_size), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    if channels == 1:
        arr = arr[:, :, None]
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def load_image_folder(root: str, image_size: int, conditional: bool,
                      channels: int = 3) -> Dataset:
    """Ingest a folder of images; conditional layout is one subdirectory per class.

    Unreadable files are skipped with a warning; an empty class directory is
    fatal in conditional mode. Sample order is the sorted path order.
    """
    root_path = Path(root)
    if not root_path.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")

    tensors: list[torch.Tensor] = []
    labels: list[int] = []
    skipped = 0

    if conditional:
        class_dirs = sorted(p for p in root_path.iterdir() if p.is_dir())
        if not class_dirs:
            raise ValueError(f"conditional dataset needs class subdirectories under {root}")
        for label, class_dir in enumerate(class_dirs):
            count_before = len(tensors)
            for path in sorted(class_dir.iterdir()):
                if path.suffix.lower() not in IMAGE_EXTENSIONS:
                    continue
                try:
                    tensors.append(_load_one(path, image_size, channels))
                    labels.append(label)
                except Exception as exc:  # unreadable file: skip, count, continue
                    skipped += 1
                    logger.warning("skipping unreadable image %s: %s", path, exc)
            if len(tensors) == count_before:
                raise ValueError(f"class directory {class_dir} has no readable images")
        num_classes = len(class_dirs)
    else:
        for path in sorted(root_path.iterdir()):
            if path.suffix.lower() not in IMAGE_EXTENSIONS:
                continue
            try:
                tensors.append(_load_one(path, image_size, channels))
            except Exception as exc:
                skipped += 1
                logger.warning("skipping unreadable image %s: %s", path, exc)
        num_classes = 0

    if not tensors:
        raise ValueError(f"no readable images under {root}")
    if skipped:
        logger.warning("skipped %d unreadable files under %s", skipped, root)

    return Dataset(
        images=torch.stack(tensors),
        labels=torch.tensor(labels, dtype=torch.int64) if conditional else None,
        image_size=image_size,
        num_classes=num_classes,
    )


def _shape_mask(shape: str, size: int, cy: float, cx: float, scale: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    rad = scale * size
    if shape == "circle":
        return dy ** 2 + dx ** 2 <= rad ** 2
    if shape == "square":
        return np.maximum(np.abs(dy), np.abs(dx)) <= rad
    if shape == "triangle":
        return (dy >= -rad) & (dy <= rad) & (np.abs(dx) <= (dy + rad) / 2.0)
    if shape == "ring":
        d2 = dy ** 2 + dx ** 2
        return (d2 <= rad ** 2) & (d2 >= (0.55 * rad) ** 2)
    if shape == "diamond":
        return np.abs(dy) + np.abs(dx) <= rad
    if shape == "cross":
        return ((np.abs(dx) <= 0.35 * rad) & (np.abs(dy) <= rad)) | \
               ((np.abs(dy) <= 0.35 * rad) & (np.abs(dx) <= rad))
    if shape == "hbar":
        return (np.abs(dy) <= 0.4 * rad) & (np.abs(dx) <= rad)
    if shape == "vbar":
        return (np.abs(dx) <= 0.4 * rad) & (np.abs(dy) <= rad)
    if shape == "frame":
        outer = np.maximum(np.abs(dy), np.abs(dx)) <= rad
        inner = np.maximum(np.abs(dy), np.abs(dx)) <= 0.55 * rad
        return outer & ~inner
    if shape == "dots":
        off = 0.5 * rad
        d1 = (dy + off) ** 2 + (dx + off) ** 2 <= (0.5 * rad) ** 2
        d2 = (dy - off) ** 2 + (dx - off) ** 2 <= (0.5 * rad) ** 2
        return d1 | d2
    raise ValueError(f"unknown shape {shape!r}")


def synth_shapes_dataset(n: int, image_size: int, num_classes: int, seed: int,
                         channels: int = 3) -> Dataset:
    """Procedural shapes-on-background dataset; class index selects the shape type."""
    if num_classes != 0 and not 2 <= num_classes <= 10:
        raise ValueError(f"num_classes must be 0 or in 2..10, got {num_classes}")
    rng = np.random.default_rng(seed)
    images = np.empty((n, channels, image_size, image_size), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)

    for i in range(n):
        if num_classes > 0:
            label = i % num_classes           # balanced split by construction
        else:
            label = int(rng.integers(0, len(SHAPE_NAMES)))
        labels[i] = label
        shape = SHAPE_NAMES[label]

        bg = rng.uniform(-1.0, 0.0, size=channels)
        fg = rng.uniform(0.1, 1.0, size=channels)
        cy = rng.uniform(0.3, 0.7) * image_size
        cx = rng.uniform(0.3, 0.7) * image_size
        scale = rng.uniform(0.15, 0.3)
        mask = _shape_mask(shape, image_size, cy, cx, scale)

        img = np.empty((channels, image_size, image_size), dtype=np.float32)
        for c in range(channels):
            img[c] = np.where(mask, fg[c], bg[c])
        images[i] = img

    return Dataset(
        images=torch.from_numpy(images),
        labels=torch.from_numpy(labels) if num_classes > 0 else None,
        image_size=image_size,
        num_classes=num_classes,
    )


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffle order for one epoch, a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def batches(dataset: Dataset, batch_size: int, seed: int, epoch: int):
    """Seeded per-epoch shuffle, dropping the final ragged batch."""
    n = len(dataset)
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds dataset size {n}")
    order = epoch_permutation(n, seed, epoch)
    for start in range(0, n - batch_size + 1, batch_size):
        idx = torch.from_numpy(order[start:start + batch_size].copy())
        images = dataset.images[idx]
        if dataset.labels is not None:
            y = dataset.labels[idx]
            groups: dict[int, list[int]] = {}
            for pos, label in enumerate(y.tolist()):
                groups.setdefault(label, []).append(pos)
            yield Batch(images=images, y=y, class_groups=groups)
        else:
            yield Batch(images=images, y=None, class_groups=None)
