"""File formats: TNSR tensors, binary PPM images, sorted-key JSON, CSV.

TNSR layout (all little-endian): magic "TNSR", u32 version=1, u8 dtype
(1 = float32), u8 rank, u64 extents[rank], then the row-major float32
payload.  PPM is the canonical image format (P6, 8-bit, maxval 255).
Writes go through a temp-file-then-rename so readers never observe a
partial file.
"""

from __future__ import annotations

import csv
import json
import os
import struct

import numpy as np

_MAGIC = b"TNSR"
_VERSION = 1
_DTYPE_F32 = 1


def _atomic_bytes(path, payload: bytes):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def write_tnsr(path, arr: np.ndarray):
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    head = _MAGIC + struct.pack("<IBB", _VERSION, _DTYPE_F32, arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    _atomic_bytes(path, head + arr.astype("<f4").tobytes())


def read_tnsr(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a TNSR file")
    version, dtype, rank = struct.unpack_from("<IBB", raw, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported TNSR version {version}")
    if dtype != _DTYPE_F32:
        raise ValueError(f"{path}: unsupported dtype code {dtype}")
    off = 10
    shape = struct.unpack_from(f"<{rank}Q", raw, off)
    off += 8 * rank
    count = int(np.prod(shape)) if rank else 1
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
    if data.size != count:
        raise ValueError(f"{path}: truncated payload")
    return np.ascontiguousarray(data.reshape(shape))


def write_ppm(path, img: np.ndarray):
    """8-bit binary PPM from a float image in [0,1], shape H x W x 3."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PPM needs H x W x 3, got {img.shape}")
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    _atomic_bytes(path, f"P6\n{w} {h}\n255\n".encode() + q.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w * 3, offset=pos)
    if data.size != h * w * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return (data.reshape(h, w, 3).astype(np.float32)) / 255.0


def dump_json(path, obj):
    payload = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)
    _atomic_bytes(path, payload.encode("utf-8") + b"\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path, header, rows):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as f:
        wr = csv.writer(f)
        wr.writerow(header)
        wr.writerows(rows)
    os.replace(tmp, path)
