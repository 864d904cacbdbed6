"""Two-step adaptive SVD ghost imaging.

Step 1 senses the scene at superpixel resolution with a full low-resolution
SVD basis.  The normalized low-resolution image is thresholded with Otsu's
method to pick superpixels, and step 2 senses only those pixels with an SVD
basis sized to the selected region.  Imaging mode keeps superpixels with
values in ``[k1, 1]``; edge mode keeps ``[k1, k2]``, the partially covered
blocks along object boundaries.
"""

from __future__ import annotations

import enum
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import imgio
from .core import QualityReport, correlation_coefficient, mean_filter, normalize_unit
from .errors import DegenerateInput, EmptyForeground, IndivisibleGrid, InvalidFactor
from .patterns import (SamplingBudget, derive_seed, mask_columns, random_matrix,
                       sampling_budget, svd_matrix, svd_orthogonalize)
from .recon import recon_svdgi
from .sensing import ProtocolConfig, add_noise, measure

OTSU_BINS = 256
DEFAULT_FACTOR = 0.8
DEFAULT_K2 = 0.95


class Mode(str, enum.Enum):
    IMAGING = "imaging"
    EDGE = "edge"


@dataclass(frozen=True)
class SuperpixelGrid:
    N: int
    n: int

    def __post_init__(self):
        if self.n < 1 or self.N < 1 or self.N % self.n:
            raise IndivisibleGrid(f"superpixel size {self.n} does not divide {self.N}")

    @property
    def grid_side(self) -> int:
        return self.N // self.n

    def block_sum(self, img) -> np.ndarray:
        """Sum of each n x n block: the scene as seen by superpixel-constant patterns."""
        g, n = self.grid_side, self.n
        return np.asarray(img, dtype=np.float64).reshape(g, n, g, n).sum(axis=(1, 3))

    def expand(self, small) -> np.ndarray:
        small = np.asarray(small)
        return np.repeat(np.repeat(small, self.n, axis=0), self.n, axis=1)


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Superpixel selection with its pixel-level expansion."""

    grid: SuperpixelGrid
    selected: np.ndarray
    mode: Mode = Mode.IMAGING
    k1: float = 0.0
    k2: float = 1.0

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=bool)
        g = self.grid.grid_side
        if sel.shape != (g, g):
            raise ValueError(f"selection must be {g}x{g}, got {sel.shape}")
        if self.k1 > self.k2:
            raise ValueError("k1 must not exceed k2")
        sel = sel.copy()
        sel.setflags(write=False)
        object.__setattr__(self, "selected", sel)
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def N_S(self) -> int:
        return int(self.selected.sum())

    @property
    def ref(self) -> str:
        digest = hashlib.sha1(np.packbits(self.selected).tobytes()).hexdigest()[:12]
        return f"{self.grid.N}/{self.grid.n}/{digest}"

    def pixel_mask(self) -> np.ndarray:
        return self.grid.expand(self.selected)

    def pixel_indices(self) -> np.ndarray:
        """Selected pixels as flat row-major scene indices, ascending."""
        return np.flatnonzero(self.pixel_mask().ravel())

    def to_text(self) -> str:
        """Run-length text grid: one line per superpixel row, runs like ``12.3#``."""
        lines = [f"rle {self.grid.N} {self.grid.n} {self.mode.value} "
                 f"{self.k1!r} {self.k2!r}"]
        for row in self.selected:
            runs, prev, count = [], row[0], 0
            for v in row:
                if v == prev:
                    count += 1
                else:
                    runs.append(f"{count}{'#' if prev else '.'}")
                    prev, count = v, 1
            runs.append(f"{count}{'#' if prev else '.'}")
            lines.append("".join(runs))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RegionMask":
        header, *rows = text.strip().splitlines()
        tag, N, n, mode, k1, k2 = header.split()
        if tag != "rle":
            raise ValueError("not a run-length mask")
        grid = SuperpixelGrid(int(N), int(n))
        sel = []
        for line in rows:
            bits, num = [], ""
            for ch in line:
                if ch.isdigit():
                    num += ch
                else:
                    bits.extend([ch == "#"] * int(num))
                    num = ""
            sel.append(bits)
        return cls(grid, np.array(sel, dtype=bool), Mode(mode), float(k1), float(k2))


def _histogram(values, bins):
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0 or v.min() == v.max():
        raise DegenerateInput("Otsu threshold needs non-constant input")
    idx = np.clip(np.floor(v * bins).astype(np.int64), 0, bins - 1)
    return np.bincount(idx, minlength=bins)


def otsu_index(hist) -> int:
    """Bin index maximizing the between-class variance; ties go to the lower bin.

    Class 0 is bins ``0..k``.  The comparison is done in exact integer
    arithmetic on the counts, so the argmax does not depend on rounding.
    """
    h = [int(c) for c in hist]
    total = sum(h)
    first = sum(i * c for i, c in enumerate(h))
    best_k, best_num, best_den = -1, 0, 1
    n0 = s0 = 0
    for k, c in enumerate(h):
        n0 += c
        s0 += k * c
        if n0 == 0 or n0 == total:
            continue
        # sigma_B^2 * total^2 == (first*n0 - total*s0)^2 / (n0 * (total - n0))
        num = (first * n0 - total * s0) ** 2
        den = n0 * (total - n0)
        if best_k < 0 or num * best_den > best_num * den:
            best_k, best_num, best_den = k, num, den
    if best_k < 0:
        raise DegenerateInput("all values fall into a single histogram bin")
    return best_k


def otsu_threshold(values, bins: int = OTSU_BINS) -> float:
    """Otsu threshold of values in [0, 1].

    Returned as the upper edge ``(k + 1) / bins`` of the last class-0 bin, so
    ``values >= threshold`` is exactly the upper class.  A bin center would
    put the lower half of bin ``k`` on the wrong side.
    """
    if bins < 2:
        raise ValueError("need at least two bins")
    return (otsu_index(_histogram(values, bins)) + 1) / bins


def select_foreground(lowres, factor: float = DEFAULT_FACTOR, mode=Mode.IMAGING,
                      k2: Optional[float] = None, bins: int = OTSU_BINS,
                      grid: Optional[SuperpixelGrid] = None) -> RegionMask:
    """Pick superpixels of a low-resolution image.

    The image is min-max normalized, ``k1 = factor * otsu``, and imaging mode
    keeps values ``>= k1`` while edge mode keeps ``k1 <= value <= k2``.
    """
    mode = Mode(mode)
    if not 0.0 < factor <= 1.0:
        raise InvalidFactor(f"factor must be in (0, 1], got {factor}")
    lowres = np.asarray(lowres, dtype=np.float64)
    g = lowres.shape[0]
    if lowres.shape != (g, g):
        raise ValueError("low-resolution image must be square")
    v = normalize_unit(lowres)
    k1 = factor * otsu_threshold(v, bins)
    if mode is Mode.IMAGING:
        k2 = 1.0
        sel = v >= k1
    else:
        if k2 is None:
            raise ValueError("edge mode needs an upper bound k2")
        if not 0.0 < k2 <= 1.0:
            raise ValueError(f"k2 must be in (0, 1], got {k2}")
        if k1 > k2:
            raise EmptyForeground(f"k1={k1:.4f} exceeds k2={k2:.4f}")
        sel = (v >= k1) & (v <= k2)
    if not sel.any():
        raise EmptyForeground(f"no superpixel in [{k1:.4f}, {k2:.4f}]")
    if grid is None:
        grid = SuperpixelGrid(g, 1)
    return RegionMask(grid, sel, mode, float(k1), float(k2))


@dataclass(eq=False)
class PipelineResult:
    lowres: np.ndarray
    mask: Optional[RegionMask]
    final: np.ndarray
    budget: SamplingBudget
    quality: QualityReport
    degraded: bool = False
    timings_ms: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "budget": self.budget.to_dict(),
            "quality": self.quality.to_dict(),
            "degraded": self.degraded,
            "k1": None if self.mask is None else self.mask.k1,
            "k2": None if self.mask is None else self.mask.k2,
            "mode": None if self.mask is None else self.mask.mode.value,
            "timings_ms": self.timings_ms,
        }

    def save(self, outdir, prefix: str = "", raw: bool = False) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        imgio.write_image(out / f"{prefix}lowres.pgm", self.lowres)
        imgio.write_image(out / f"{prefix}final.png", self.final, normalize=False)
        if self.mask is not None:
            (out / f"{prefix}mask.txt").write_text(self.mask.to_text())
        if raw:
            imgio.write_raw(out / f"{prefix}final.f64", self.final)
        (out / f"{prefix}summary.json").write_text(json.dumps(self.summary(), indent=2) + "\n")


def _noisy(record, protocol: ProtocolConfig, stream: int, enabled: bool = True):
    if protocol.snr_db is None or not enabled:
        return record
    return add_noise(record, protocol.snr_db, derive_seed(protocol.noise_seed, stream))


def _lenient_unit(img):
    try:
        return normalize_unit(img)
    except DegenerateInput:
        return np.zeros_like(img)


def _safe_cc(a, b):
    try:
        return correlation_coefficient(a, b)
    except DegenerateInput:
        return float("nan")


def step2_count(budget_cells: int, N: int, M1: int, step2_fraction: float = 1.0,
                target_ratio: Optional[float] = None) -> int:
    """Number of step-2 patterns for a region of ``budget_cells`` pixels."""
    if target_ratio is not None:
        want = int(round(target_ratio * N * N)) - M1 - 2
    else:
        if not 0.0 < step2_fraction <= 1.0:
            raise ValueError("step2_fraction must be in (0, 1]")
        want = int(round(step2_fraction * budget_cells))
    return max(1, min(budget_cells, want))


def run_asvd(obj, n: int, factor: float = DEFAULT_FACTOR, mode=Mode.IMAGING,
             k2: Optional[float] = None, protocol: Optional[ProtocolConfig] = None,
             seed: int = 0, step2_fraction: float = 1.0,
             target_ratio: Optional[float] = None, prefilter_radius: int = 0,
             bins: int = OTSU_BINS) -> PipelineResult:
    """Run both steps on a square object with values in [0, 1].

    ``prefilter_radius > 0`` box-filters the low-resolution image before
    thresholding.  ``target_ratio`` sizes step 2 so the total sampling ratio
    (auxiliary patterns included) matches it, capped at full region
    sampling; otherwise ``step2_fraction`` of the region is sampled.
    """
    protocol = protocol or ProtocolConfig()
    mode = Mode(mode)
    obj = np.asarray(obj, dtype=np.float64)
    N = obj.shape[0]
    if obj.shape != (N, N):
        raise ValueError("object must be square")
    grid = SuperpixelGrid(N, n)
    g = grid.grid_side
    timings = {}
    t0 = time.perf_counter()

    # step 1: superpixel-constant patterns see only the block sums of the object
    phi1 = svd_matrix(g * g, g * g, derive_seed(seed, 1))
    rec1 = measure(phi1, grid.block_sum(obj), protocol.protocol)
    rec1 = _noisy(rec1, protocol, 1, protocol.noise_step1)
    lowres_raw = recon_svdgi(phi1, rec1, normalize=False)
    lowres = _lenient_unit(lowres_raw)
    t1 = time.perf_counter()
    timings["step1"] = 1e3 * (t1 - t0)

    score = mean_filter(lowres, prefilter_radius) if prefilter_radius else lowres
    try:
        mask = select_foreground(score, factor, mode, k2 if mode is Mode.EDGE else None,
                                 bins, grid=grid)
    except (EmptyForeground, DegenerateInput):
        final = grid.expand(lowres)
        budget = sampling_budget(N, n, 0, M2=0)
        wall = 1e3 * (time.perf_counter() - t0)
        timings["total"] = wall
        quality = QualityReport(_safe_cc(final, obj), budget.eta_patterns,
                                budget.eta_total, wall)
        return PipelineResult(lowres, None, final, budget, quality, degraded=True,
                              timings_ms=timings)

    # step 2: orthogonal patterns over the selected pixels only
    cells = n * n * mask.N_S
    M2 = step2_count(cells, N, g * g, step2_fraction, target_ratio)
    small = svd_orthogonalize(random_matrix(M2, cells, derive_seed(seed, 2)))
    phi2 = mask_columns(small, mask)
    t2 = time.perf_counter()
    timings["step2_patterns"] = 1e3 * (t2 - t1)
    rec2 = _noisy(measure(phi2, obj, protocol.protocol), protocol, 2)
    final = recon_svdgi(phi2, rec2)
    t3 = time.perf_counter()
    timings["step2_sense_recon"] = 1e3 * (t3 - t2)
    wall = 1e3 * (t3 - t0)
    timings["total"] = wall

    budget = sampling_budget(N, n, mask.N_S, M2=M2)
    quality = QualityReport(_safe_cc(final, obj), budget.eta_patterns, budget.eta_total, wall)
    return PipelineResult(lowres, mask, final, budget, quality, timings_ms=timings)


def run_edge(obj, n: int, factor: float = DEFAULT_FACTOR, k2: float = DEFAULT_K2,
             protocol: Optional[ProtocolConfig] = None, seed: int = 0,
             **kwargs) -> PipelineResult:
    """Edge-detection mode: step 2 covers superpixels valued in ``[k1, k2]``.

    The low-resolution image is box-filtered (radius 1) before thresholding
    unless ``prefilter_radius`` says otherwise; smoothing widens the band so
    it straddles the boundary instead of hugging one side of it.
    """
    kwargs.setdefault("prefilter_radius", 1)
    if not 0.0 < k2 <= 1.0:
        raise ValueError(f"k2 must be in (0, 1], got {k2}")
    return run_asvd(obj, n, factor, Mode.EDGE, k2, protocol, seed, **kwargs)


def object_edges(obj, level: float = 0.5) -> np.ndarray:
    """Inner boundary of a binary object: object pixels with a 4-neighbour outside it."""
    inside = np.asarray(obj) > level
    padded = np.pad(inside, 1, mode="edge")
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    return inside & ~interior


def adjacent(sel: np.ndarray) -> np.ndarray:
    """Boolean map of cells 8-adjacent to any true cell of ``sel``."""
    p = np.pad(np.asarray(sel, dtype=bool), 1)
    out = np.zeros_like(sel, dtype=bool)
    h, w = sel.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy or dx:
                out |= p[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    return out


__all__ = [
    "Mode", "SuperpixelGrid", "RegionMask", "PipelineResult", "otsu_index",
    "otsu_threshold", "select_foreground", "run_asvd", "run_edge", "step2_count",
    "object_edges", "adjacent",
]
