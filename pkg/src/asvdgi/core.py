"""Image helpers and quality metrics.

Images are plain 2-D ``float64`` numpy arrays in row-major order; values are
expected in [0, 1] once normalized.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateInput, DimensionMismatch


@dataclass(frozen=True)
class QualityReport:
    """Quality and cost summary of one reconstruction.

    ``sampling_ratio_patterns`` counts only the sensing patterns, while
    ``sampling_ratio_total`` also counts auxiliary (all-ones) projections.
    """

    cc: float
    sampling_ratio_patterns: float
    sampling_ratio_total: float
    wall_time_ms: float

    def __post_init__(self):
        if self.sampling_ratio_total < self.sampling_ratio_patterns:
            raise ValueError("total sampling ratio below pattern sampling ratio")

    def to_dict(self):
        return asdict(self)


def as_image(a) -> np.ndarray:
    img = np.asarray(a, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DegenerateInput("image contains non-finite values")
    return img


def correlation_coefficient(a, b) -> float:
    """Pearson correlation coefficient over all pixels of two images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    da = a.ravel() - a.mean()
    db = b.ravel() - b.mean()
    saa = float(da @ da)
    sbb = float(db @ db)
    if saa == 0.0 or sbb == 0.0:
        raise DegenerateInput("correlation undefined for a constant image")
    return float(da @ db) / np.sqrt(saa * sbb)


def normalize_unit(a) -> np.ndarray:
    """Min-max normalize to [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    lo = a.min()
    hi = a.max()
    if hi == lo:
        raise DegenerateInput("cannot normalize a constant image")
    out = (a - lo) / (hi - lo)
    # exact endpoints regardless of rounding in the division
    out[a == lo] = 0.0
    out[a == hi] = 1.0
    return out


def mean_filter(a, radius: int = 1) -> np.ndarray:
    """Box mean over a (2*radius+1)^2 window, border pixels replicated."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    a = np.asarray(a, dtype=np.float64)
    if radius == 0:
        return a.copy()
    out = ndimage.uniform_filter(a, size=2 * radius + 1, mode="nearest")
    # uniform_filter accumulates rounding; clamp back into the input range
    return np.clip(out, a.min(), a.max())
