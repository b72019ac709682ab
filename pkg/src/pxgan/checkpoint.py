"""Versioned checkpoint archive with byte-stable serialization.

Layout: magic, format version, header length, canonical JSON header
(sorted keys), then raw tensor bytes concatenated in sorted name order.
No timestamps or other ambient state are written, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

MAGIC = b"PXCK"
FORMAT_VERSION = 1

_DTYPES = {
    "float32": np.float32,
    "float64": np.float64,
    "int64": np.int64,
    "int32": np.int32,
    "uint8": np.uint8,
}


@dataclass
class Checkpoint:
    iteration: int
    config_text: str
    tensors: dict[str, torch.Tensor]
    rng_state: bytes
    metrics_tail: list[dict]
    meta: dict
    format_version: int = FORMAT_VERSION


def _to_numpy(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        return t.detach().cpu().numpy()
    return np.asarray(t)


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in ckpt.tensors.items():
        arr = _to_numpy(tensor)
        if arr.dtype.name not in _DTYPES:
            raise ValueError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
        arrays[name] = arr  # tobytes() always emits C order; 0-dim shapes survive

    index = {}
    offset = 0
    for name in sorted(arrays):
        arr = arrays[name]
        index[name] = {
            "dtype": arr.dtype.name,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": arr.nbytes,
        }
        offset += arr.nbytes

    header = {
        "format_version": ckpt.format_version,
        "iteration": ckpt.iteration,
        "config_text": ckpt.config_text,
        "rng_state_hex": ckpt.rng_state.hex(),
        "metrics_tail": ckpt.metrics_tail,
        "meta": ckpt.meta,
        "tensors": index,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for name in sorted(arrays):
            fh.write(arrays[name].tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version}")
    header_len = struct.unpack("<Q", blob[8:16])[0]
    header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    payload = blob[16 + header_len:]

    tensors: dict[str, torch.Tensor] = {}
    for name, info in header["tensors"].items():
        dtype = _DTYPES[info["dtype"]]
        start, nbytes = info["offset"], info["nbytes"]
        arr = np.frombuffer(payload[start:start + nbytes], dtype=dtype).reshape(info["shape"])
        tensors[name] = torch.from_numpy(arr.copy())

    return Checkpoint(
        iteration=header["iteration"],
        config_text=header["config_text"],
        tensors=tensors,
        rng_state=bytes.fromhex(header["rng_state_hex"]),
        metrics_tail=header["metrics_tail"],
        meta=header["meta"],
        format_version=header["format_version"],
    )
