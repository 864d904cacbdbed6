"""Binarization of grayscale patterns for binary (micromirror) modulators.

A pattern is enlarged by nearest-neighbour replication so every grayscale
pixel owns an a x a block, then binarized with serpentine Floyd-Steinberg
error diffusion.  Weights that would fall outside the bitmap are
redistributed over the in-bounds neighbours, so the only intensity lost is
the residual of the very last pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imgio
from .errors import DimensionMismatch, InvalidFactor

DEFAULT_UPSCALE = 4

# (row offset, column offset along the scan direction, weight / 16)
_FS_TAPS = ((0, 1, 7), (1, -1, 3), (1, 0, 5), (1, 1, 1))


@dataclass(frozen=True, eq=False)
class BinaryPattern:
    bits: np.ndarray
    upscale: int

    @property
    def side(self) -> int:
        return self.bits.shape[0]

    def block_means(self) -> np.ndarray:
        """On-fraction of every a x a block, i.e. the displayed gray level."""
        a = self.upscale
        h, w = self.bits.shape
        return self.bits.reshape(h // a, a, w // a, a).mean(axis=(1, 3))

    def packed(self) -> bytes:
        """Row-major bit blob, MSB first, each row padded to a byte boundary."""
        return np.packbits(self.bits, axis=1).tobytes()

    def save_packed(self, path) -> None:
        Path(path).write_bytes(self.packed())

    def save_pbm(self, path) -> None:
        imgio.write_pbm(path, self.bits)


def upscale(pattern, a: int) -> np.ndarray:
    p = np.asarray(pattern, dtype=np.float64)
    return np.repeat(np.repeat(p, a, axis=0), a, axis=1)


def error_diffuse(img) -> np.ndarray:
    """Serpentine Floyd-Steinberg binarization at threshold 0.5."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    buf = img.tolist()
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        step = 1 if y % 2 == 0 else -1
        row = buf[y]
        nxt = buf[y + 1] if y + 1 < h else None
        xs = range(w) if step == 1 else range(w - 1, -1, -1)
        for x in xs:
            old = row[x]
            on = old >= 0.5
            err = old - (1.0 if on else 0.0)
            if on:
                out[y, x] = True
            if err == 0.0:
                continue
            taps = []
            total = 0
            for dy, dx, wt in _FS_TAPS:
                xx = x + dx * step
                if 0 <= xx < w and (dy == 0 or nxt is not None):
                    taps.append((dy, xx, wt))
                    total += wt
            for dy, xx, wt in taps:
                share = err * wt / total
                if dy == 0:
                    row[xx] += share
                else:
                    nxt[xx] += share
    return out


def dither(pattern, a: int = DEFAULT_UPSCALE) -> BinaryPattern:
    """Binary a*N x a*N rendition of a [0, 1] grayscale pattern."""
    if int(a) != a or a < 1:
        raise InvalidFactor(f"upscale factor must be an integer >= 1, got {a}")
    a = int(a)
    return BinaryPattern(error_diffuse(upscale(pattern, a)), a)


def dithered_forward(pattern, obj, a: int = DEFAULT_UPSCALE) -> float:
    """Bucket reading of the dithered pattern, with each block averaged onto its object pixel."""
    pattern = np.asarray(pattern, dtype=np.float64)
    obj = np.asarray(obj, dtype=np.float64)
    if pattern.shape != obj.shape:
        raise DimensionMismatch(f"pattern {pattern.shape} vs object {obj.shape}")
    return float(np.sum(dither(pattern, a).block_means() * obj))
