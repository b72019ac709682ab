import math

import numpy as np
import pytest
import torch
from PIL import Image

from pxgan.data import (
    Dataset,
    batches,
    epoch_permutation,
    load_image_folder,
    synth_shapes_dataset,
)


# ---------------------------------------------------------------------------
# synthetic shapes

def test_synth_deterministic():
    a = synth_shapes_dataset(20, 16, 0, seed=5)
    b = synth_shapes_dataset(20, 16, 0, seed=5)
    assert torch.equal(a.images, b.images)
    c = synth_shapes_dataset(20, 16, 0, seed=6)
    assert not torch.equal(a.images, c.images)


def test_synth_balanced_classes():
    ds = synth_shapes_dataset(300, 16, 3, seed=0)
    assert ds.class_counts() == {0: 100, 1: 100, 2: 100}
    assert ds.labels.shape == (300,)


def test_synth_value_range():
    ds = synth_shapes_dataset(200, 16, 0, seed=1)
    assert ds.images.min().item() >= -1.0
    assert ds.images.max().item() <= 1.0
    assert ds.images.dtype == torch.float32


def test_synth_rejects_single_class():
    with pytest.raises(ValueError):
        synth_shapes_dataset(10, 16, 1, seed=0)


# ---------------------------------------------------------------------------
# folder ingestion

def _write_gradient_image(path, width, height):
    arr = np.zeros((height, width, 3), dtype=np.uint8)
    for y in range(height):
        for x in range(width):
            arr[y, x] = ((x * 255) // max(width - 1, 1),
                         (y * 255) // max(height - 1, 1),
                         ((x + y) * 255) // max(width + height - 2, 1))
    Image.fromarray(arr).save(path)
    return arr


def triangle_resample_1d(values: np.ndarray, out_size: int) -> np.ndarray:
    """Independent reference: antialiased triangle-filter resampling along axis 0."""
    in_size = values.shape[0]
    scale = in_size / out_size
    support = max(1.0, scale)
    out = np.zeros((out_size,) + values.shape[1:], dtype=np.float64)
    for i in range(out_size):
        center = (i + 0.5) * scale
        lo = max(0, int(math.floor(center - support)))
        hi = min(in_size, int(math.ceil(center + support)))
        weights = []
        for k in range(lo, hi):
            x = (k + 0.5 - center) / max(scale, 1.0)
            weights.append(max(0.0, 1.0 - abs(x)))
        weights = np.array(weights)
        weights /= weights.sum()
        out[i] = np.tensordot(weights, values[lo:hi], axes=(0, 0))
    return out


def test_folder_loading_and_resize_oracle(tmp_path):
    # 100x60 -> center crop 60x60 -> resize 32
    src = _write_gradient_image(tmp_path / "img.png", 100, 60)
    ds = load_image_folder(str(tmp_path), image_size=32, conditional=False)
    assert len(ds) == 1
    assert ds.num_classes == 0
    assert ds.images.shape == (1, 3, 32, 32)

    cropped = src[:, 20:80].astype(np.float64)  # center crop of the width
    ref = triangle_resample_1d(cropped, 32)
    ref = triangle_resample_1d(ref.transpose(1, 0, 2), 32).transpose(1, 0, 2)
    got = (ds.images[0].numpy().transpose(1, 2, 0) + 1.0) * 127.5
    for (y, x) in [(0, 0), (0, 31), (31, 0), (31, 31)]:
        assert np.all(np.abs(got[y, x] - ref[y, x]) <= 2.0), (y, x, got[y, x], ref[y, x])


def test_folder_conditional_labels_by_sorted_subdir(tmp_path):
    for name, count in (("zebra", 2), ("ant", 3)):
        d = tmp_path / name
        d.mkdir()
        for i in range(count):
            Image.new("RGB", (20, 20), color=(i * 30, 0, 0)).save(d / f"{i}.png")
    ds = load_image_folder(str(tmp_path), image_size=16, conditional=True)
    # sorted subdirectory order: ant -> 0, zebra -> 1
    assert ds.num_classes == 2
    assert ds.class_counts() == {0: 3, 1: 2}


def test_folder_skips_unreadable_and_rejects_empty_class(tmp_path, caplog):
    good = tmp_path / "flat"
    good.mkdir()
    Image.new("RGB", (20, 20), color=(1, 2, 3)).save(good / "a.png")
    (good / "broken.png").write_bytes(b"not an image at all")
    with caplog.at_level("WARNING"):
        ds = load_image_folder(str(good), image_size=16, conditional=False)
    assert len(ds) == 1
    assert any("skipping unreadable" in r.message for r in caplog.records)

    cond = tmp_path / "cond"
    (cond / "full").mkdir(parents=True)
    (cond / "empty").mkdir()
    Image.new("RGB", (20, 20)).save(cond / "full" / "x.png")
    with pytest.raises(ValueError, match="no readable images"):
        load_image_folder(str(cond), image_size=16, conditional=True)


def test_ingestion_idempotent(tmp_path):
    _write_gradient_image(tmp_path / "img.png", 40, 40)
    a = load_image_folder(str(tmp_path), image_size=16, conditional=False)
    b = load_image_folder(str(tmp_path), image_size=16, conditional=False)
    assert torch.equal(a.images, b.images)


def test_missing_root():
    with pytest.raises(FileNotFoundError):
        load_image_folder("/nonexistent/path", image_size=16, conditional=False)


# ---------------------------------------------------------------------------
# batching

def _toy_dataset(n, num_classes=0):
    images = torch.arange(n, dtype=torch.float32).view(n, 1, 1, 1).expand(n, 1, 4, 4)
    labels = torch.arange(n) % num_classes if num_classes else None
    return Dataset(images=images.contiguous(), labels=labels, image_size=4,
                   num_classes=num_classes)


def test_batches_deterministic_order():
    ds = _toy_dataset(50)
    a = [b.images for b in batches(ds, 10, seed=3, epoch=0)]
    b = [b.images for b in batches(ds, 10, seed=3, epoch=0)]
    for x, y in zip(a, b):
        assert torch.equal(x, y)


def test_batches_drop_last():
    ds = _toy_dataset(103)
    got = list(batches(ds, 10, seed=0, epoch=0))
    assert len(got) == 10


def test_batches_partition_dataset_minus_tail():
    ds = _toy_dataset(103)
    seen = []
    for b in batches(ds, 10, seed=0, epoch=0):
        seen.extend(b.images[:, 0, 0, 0].tolist())
    assert len(seen) == 100
    assert len(set(seen)) == 100
    assert set(seen).issubset(set(range(103)))


def test_epoch_shuffles_differ():
    p0 = epoch_permutation(200, seed=4, epoch=0)
    p1 = epoch_permutation(200, seed=4, epoch=1)
    assert not np.array_equal(p0, p1)
    assert np.array_equal(p0, epoch_permutation(200, seed=4, epoch=0))


def test_batches_conditional_groups():
    ds = _toy_dataset(40, num_classes=4)
    for b in batches(ds, 8, seed=1, epoch=0):
        assert b.y is not None
        for label, positions in b.class_groups.items():
            assert all(b.y[p].item() == label for p in positions)
        assert sum(len(v) for v in b.class_groups.values()) == 8


def test_batch_size_too_large():
    ds = _toy_dataset(5)
    with pytest.raises(ValueError):
        list(batches(ds, 10, seed=0, epoch=0))
