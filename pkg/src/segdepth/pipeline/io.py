"""Readers and writers for the on-disk formats.

* label PNG  -- 8-bit single channel, class ids plus the ignore id
* depth PNG  -- 16-bit single channel, ``depth = raw / scale``; raw 0 and
  65535 mark invalid pixels
* logits     -- ``LGT1`` binary: magic, little-endian uint32 height, width,
  channels, then float32 values in (row, column, channel) order
* image PNG  -- 8-bit RGB

Writers go through a temporary file and an atomic rename so a failed
record never leaves a half-written output behind.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from ..core import PALETTE, ClassTable, DepthMap
from ..errors import (BadMagicError, BitDepthError, ChannelError, FormatError, LabelValueError,
                      NonFiniteError, TruncatedError, VersionError)

DEPTH_SCALE = 256.0
DEPTH_INVALID_CODES = (0, 65535)

LOGITS_MAGIC = b"LGT1"
_HEADER = struct.Struct("<4sIII")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _png_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return buf.getvalue()


def _open_png(source) -> Image.Image:
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    im = Image.open(source)
    im.load()
    return im


# -- labels -----------------------------------------------------------------

def decode_label_png(source, table: ClassTable | None = None) -> np.ndarray:
    im = _open_png(source)
    if im.mode in ("I;16", "I;16B", "I", "1"):
        raise BitDepthError(f"label PNG must be 8-bit, got mode {im.mode}")
    if im.mode != "L":
        raise ChannelError(f"label PNG must be single-channel 8-bit gray, got mode {im.mode}")
    label = np.array(im, dtype=np.uint8)
    if table is not None:
        bad = ~table.valid_values_lut()[label]
        if bad.any():
            r, c = (int(v) for v in np.argwhere(bad)[0])
            raise LabelValueError(
                f"label value {int(label[r, c])} at pixel {(r, c)} is not in the class table",
                pixel=(r, c), value=int(label[r, c]))
    return label


def read_label_png(path, table: ClassTable | None = None) -> np.ndarray:
    return decode_label_png(Path(path).read_bytes(), table)


def write_label_png(path, label: np.ndarray) -> None:
    label = np.asarray(label)
    if label.ndim != 2:
        raise ChannelError(f"label map must be 2-D, got shape {label.shape}")
    if label.dtype != np.uint8:
        if label.min() < 0 or label.max() > 255:
            raise LabelValueError("label values must fit in 8 bits")
        label = label.astype(np.uint8)
    atomic_write_bytes(path, _png_bytes(np.ascontiguousarray(label)))


def colorize(label: np.ndarray, table: ClassTable) -> np.ndarray:
    lut = np.zeros((256, 3), dtype=np.uint8)
    for c in table.classes:
        lut[c.id] = PALETTE.get(c.name, (c.id * 37 % 256, c.id * 91 % 256, c.id * 53 % 256))
    return lut[np.asarray(label)]


# -- depth ------------------------------------------------------------------

def decode_depth_png(source, scale: float = DEPTH_SCALE) -> DepthMap:
    if not scale > 0:
        raise ValueError("depth scale must be positive")
    im = _open_png(source)
    if im.mode in ("RGB", "RGBA", "LA", "P"):
        raise ChannelError(f"depth PNG must be single-channel, got mode {im.mode}")
    if im.mode not in ("I;16", "I;16B", "I"):
        raise BitDepthError(f"depth PNG must be 16-bit, got mode {im.mode}")
    raw = np.array(im).astype(np.int64)
    if raw.min() < 0 or raw.max() > 65535:
        raise BitDepthError("depth PNG values exceed the 16-bit range")
    valid = (raw != 0) & (raw != 65535)
    values = np.where(valid, raw / scale, 0.0)
    return DepthMap(values, valid)


def read_depth_png(path, scale: float = DEPTH_SCALE) -> DepthMap:
    return decode_depth_png(Path(path).read_bytes(), scale)


def encode_depth(depth: DepthMap, scale: float = DEPTH_SCALE, invalid_code: int = 0) -> np.ndarray:
    if not scale > 0:
        raise ValueError("depth scale must be positive")
    if invalid_code not in DEPTH_INVALID_CODES:
        raise ValueError(f"invalid code must be one of {DEPTH_INVALID_CODES}")
    raw = np.full(depth.shape, invalid_code, dtype=np.uint16)
    v = depth.values[depth.valid]
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("valid depth values must be finite")
    q = np.rint(v * scale)
    if v.size and (q.min() < 1 or q.max() > 65534):
        raise ValueError(
            f"valid depths must lie in [{1 / scale}, {65534 / scale}] at scale {scale}")
    raw[depth.valid] = q.astype(np.uint16)
    return raw


def write_depth_png(path, depth: DepthMap, scale: float = DEPTH_SCALE, invalid_code: int = 0) -> None:
    atomic_write_bytes(path, _png_bytes(encode_depth(depth, scale, invalid_code)))


# -- images -----------------------------------------------------------------

def decode_image_png(source) -> np.ndarray:
    im = _open_png(source)
    if im.mode in ("I;16", "I;16B", "I", "F"):
        raise BitDepthError(f"image must be 8-bit, got mode {im.mode}")
    return np.array(im.convert("RGB"), dtype=np.uint8)


def read_image(path) -> np.ndarray:
    return decode_image_png(Path(path).read_bytes())


def write_image_png(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ChannelError(f"image must be (H, W, 3) uint8, got {image.shape} {image.dtype}")
    atomic_write_bytes(path, _png_bytes(np.ascontiguousarray(image)))


# -- logits -----------------------------------------------------------------

def decode_logits(data: bytes) -> np.ndarray:
    if len(data) < 4:
        raise TruncatedError("logits file is shorter than its magic")
    magic = bytes(data[:4])
    if magic != LOGITS_MAGIC:
        if magic[:3] == LOGITS_MAGIC[:3]:
            raise VersionError(f"unsupported logits format version {magic!r}")
        raise BadMagicError(f"not a logits file (magic {magic!r})")
    if len(data) < _HEADER.size:
        raise TruncatedError("logits header is truncated")
    _, h, w, c = _HEADER.unpack_from(data)
    expected = _HEADER.size + 4 * h * w * c
    if len(data) < expected:
        raise TruncatedError(f"logits payload holds {len(data)} bytes, header promises {expected}")
    if len(data) > expected:
        raise FormatError(f"logits file has {len(data) - expected} trailing bytes")
    z = np.frombuffer(data, dtype="<f4", count=h * w * c, offset=_HEADER.size)
    z = z.reshape(h, w, c).astype(np.float32)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("logits contain non-finite values")
    return z


def read_logits(path) -> np.ndarray:
    return decode_logits(Path(path).read_bytes())


def encode_logits(logits: np.ndarray) -> bytes:
    z = np.asarray(logits)
    if z.ndim != 3:
        raise FormatError(f"logits must be (H, W, C), got shape {z.shape}")
    with np.errstate(over="ignore"):
        z32 = np.ascontiguousarray(z, dtype="<f4")
    if not np.all(np.isfinite(z32)):
        raise NonFiniteError("logits are non-finite or overflow float32")
    h, w, c = z32.shape
    return _HEADER.pack(LOGITS_MAGIC, h, w, c) + z32.tobytes()


def write_logits(path, logits: np.ndarray) -> None:
    atomic_write_bytes(path, encode_logits(logits))


# -- weights ----------------------------------------------------------------

def weights_document(weights, table: ClassTable, stats=None) -> dict:
    freqs = stats.freqs if stats is not None else [None] * len(weights)
    counts = stats.counts if stats is not None else [None] * len(weights)
    return {
        "format": "segdepth-weights/1",
        "delta": weights.delta,
        "normalized": weights.normalized,
        "total_pixels": None if stats is None else int(stats.total),
        "classes": [
            {
                "id": i,
                "name": name,
                "count": None if counts[i] is None else int(counts[i]),
                "freq": None if freqs[i] is None else float(freqs[i]),
                "w_uda_raw": float(weights.w_uda_raw[i]),
                "w_uda": float(weights.w_uda[i]),
                "w_dep": float(weights.w_dep[i]),
            }
            for i, name in enumerate(table.names)
        ],
    }


def write_weights(path, weights, table: ClassTable, stats=None) -> None:
    doc = weights_document(weights, table, stats)
    atomic_write_bytes(path, (json.dumps(doc, indent=2) + "\n").encode())


def read_weights(path, table: ClassTable | None = None):
    from ..classweights import ClassWeights

    doc = json.loads(Path(path).read_text())
    rows = sorted(doc["classes"], key=lambda r: r["id"])
    if [r["id"] for r in rows] != list(range(len(rows))):
        raise FormatError("weights file class ids must be 0..C-1")
    if table is not None and [r["name"] for r in rows] != table.names:
        raise FormatError("weights file classes do not match the active class table")
    return ClassWeights(
        float(doc["delta"]),
        np.array([r["w_uda_raw"] for r in rows], dtype=np.float64),
        np.array([r["w_uda"] for r in rows], dtype=np.float64),
        np.array([r["w_dep"] for r in rows], dtype=np.float64),
        bool(doc.get("normalized", True)),
    )
