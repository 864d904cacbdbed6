"""Grayscale image files: 8-bit PGM/PNG in and out, raw float64 dumps, 1-bit PBM."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage


def read_image(path) -> np.ndarray:
    """Load an 8-bit grayscale PGM/PNG as float64 in [0, 1]."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "1", "P", "RGB", "RGBA", "I;16", "I"):
            raise ValueError(f"{path}: unsupported image mode {im.mode}")
        if im.mode in ("I;16", "I"):
            arr = np.asarray(im, dtype=np.float64)
            return arr / (65535.0 if im.mode == "I;16" else max(arr.max(), 1.0))
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def to_uint8(img) -> np.ndarray:
    """Min-max normalize and quantize to 8 bits (a flat image maps to 0)."""
    a = np.asarray(img, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi > lo:
        a = (a - lo) / (hi - lo)
    else:
        a = np.zeros_like(a)
    return np.round(a * 255.0).astype(np.uint8)


def write_image(path, img, normalize: bool = True) -> None:
    """Write an 8-bit grayscale image; the format follows the file suffix."""
    if normalize:
        data = to_uint8(img)
    else:
        data = np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0)
        data = data.astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(path)


def write_raw(path, img) -> None:
    """Little-endian float64, row-major, no header (shape is recorded elsewhere)."""
    Path(path).write_bytes(np.ascontiguousarray(img, dtype="<f8").tobytes())


def read_raw(path, shape) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype="<f8").reshape(shape).copy()


def write_pbm(path, bits) -> None:
    """Binary PBM (P4); a set bit is written as white (mirror on)."""
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    # PBM uses 1 for black, so invert to keep "on" bright
    packed = np.packbits(~bits, axis=1)
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode("ascii"))
        fh.write(packed.tobytes())


def read_pbm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 3:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P4":
        raise ValueError(f"{path}: not a binary PBM")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(raw, dtype=np.uint8, offset=pos + 1)
    rows = data[: h * ((w + 7) // 8)].reshape(h, -1)
    return ~np.unpackbits(rows, axis=1)[:, :w].astype(bool)
