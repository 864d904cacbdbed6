"""Measurement matrices: random generation, SVD orthogonalization, region masking,
single-round transformation and measurement-count accounting.
"""

from __future__ import annotations

import enum
import functools
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import _linalg
from .errors import (DegenerateInput, IndivisibleGrid, InvalidShape, KindMismatch,
                     MaskMismatch)


class MatrixKind(str, enum.Enum):
    RANDOM = "random"
    SVD = "svd"
    MASKED_SVD = "masked"


_KIND_CODES = {MatrixKind.RANDOM: 0, MatrixKind.SVD: 1, MatrixKind.MASKED_SVD: 2}
_MAGIC = b"GIPM"
_HEADER = struct.Struct("<4sB3xII")  # 16 bytes: magic, kind, pad, rows, cols


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """Rows are flattened (row-major) illumination patterns.

    A masked matrix stores only its non-zero columns: ``entries`` has one
    column per index in ``support`` (ascending scene pixel indices), and every
    other scene column is identically zero.  ``dense()`` materializes the full
    ``rows x cols`` array.
    """

    entries: np.ndarray
    kind: MatrixKind
    cols: int
    support: Optional[np.ndarray] = None
    mask_ref: Optional[str] = None

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2:
            raise InvalidShape(f"entries must be 2-D, got {e.shape}")
        if self.support is None:
            if e.shape[1] != self.cols:
                raise InvalidShape("entries width must equal cols for a dense matrix")
        elif len(self.support) != e.shape[1]:
            raise MaskMismatch("support length must equal entries width")
        # read-only view: immutable without copying large matrices
        e = e.view()
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def is_masked(self) -> bool:
        return self.support is not None and len(self.support) < self.cols

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Readings ``Phi @ x`` for a flattened scene ``x``."""
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.cols:
            raise InvalidShape(f"scene has {x.size} pixels, matrix expects {self.cols}")
        if self.support is not None:
            x = x[self.support]
        return self.entries @ x

    def adjoint(self, b: np.ndarray) -> np.ndarray:
        """``Phi^T @ b`` as a flat scene vector; unsupported columns are exactly 0."""
        b = np.asarray(b, dtype=np.float64)
        v = self.entries.T @ b
        if self.support is None:
            return v
        out = np.zeros(self.cols)
        out[self.support] = v
        return out

    def row_extrema(self):
        """Per-row (min, max) over all ``cols`` entries, implicit zeros included."""
        lo = self.entries.min(axis=1)
        hi = self.entries.max(axis=1)
        if self.is_masked:
            lo = np.minimum(lo, 0.0)
            hi = np.maximum(hi, 0.0)
        return lo, hi

    def dense(self) -> np.ndarray:
        if self.support is None:
            return np.array(self.entries)
        out = np.zeros((self.rows, self.cols))
        out[:, self.support] = self.entries
        return out


def derive_seed(seed: int, stream: int) -> int:
    """Independent 32-bit seed for sub-stream ``stream`` of ``seed``."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def random_matrix(M: int, N2: int, seed: int) -> MeasurementMatrix:
    """M x N2 matrix of i.i.d. uniform [0, 1) entries."""
    if M < 1 or M > N2:
        raise InvalidShape(f"need 1 <= M <= N2, got M={M}, N2={N2}")
    rng = np.random.default_rng(seed)
    return MeasurementMatrix(rng.random((M, N2)), MatrixKind.RANDOM, N2)


def svd_orthogonalize(phi: MeasurementMatrix, method: str = "auto") -> MeasurementMatrix:
    """Replace every singular value of ``phi`` by one: ``U [I 0] V^T``.

    The result has orthonormal rows spanning the same row space as ``phi``.
    ``method`` selects the factorization ("lapack", "gram" or "auto"); both
    compute the same matrix.
    """
    if phi.kind is MatrixKind.MASKED_SVD:
        raise KindMismatch("orthogonalize the small matrix before masking")
    if phi.rows > phi.cols:
        raise InvalidShape("more patterns than pixels")
    out = _linalg.polar_rows(np.asarray(phi.entries), method=method)
    return MeasurementMatrix(out, MatrixKind.SVD, phi.cols)


@functools.lru_cache(maxsize=4)
def _cached_svd(M, N2, seed):
    return svd_orthogonalize(random_matrix(M, N2, seed))


# matrices above this many entries are rebuilt rather than kept in the cache
_CACHE_MAX_ENTRIES = 2048 * 4096


def svd_matrix(M: int, N2: int, seed: int) -> MeasurementMatrix:
    """Orthogonalized random matrix for (shape, seed), cached for small shapes."""
    if M * N2 <= _CACHE_MAX_ENTRIES:
        return _cached_svd(M, N2, seed)
    return svd_orthogonalize(random_matrix(M, N2, seed))


def mask_columns(phi_small: MeasurementMatrix, mask) -> MeasurementMatrix:
    """Embed a region-sized SVD matrix into full-scene coordinates.

    Column ``j`` of ``phi_small`` lands on the ``j``-th selected pixel in
    row-major scene order; all other pixels are zero.  ``mask`` is a
    :class:`asvdgi.adaptive.RegionMask`.
    """
    support = np.asarray(mask.pixel_indices(), dtype=np.intp)
    if support.size != phi_small.cols:
        raise MaskMismatch(
            f"mask covers {support.size} pixels, matrix has {phi_small.cols} columns")
    total = mask.grid.N * mask.grid.N
    return MeasurementMatrix(phi_small.entries, MatrixKind.MASKED_SVD, total,
                             support=support, mask_ref=mask.ref)


def expand_superpixels(phi_small: MeasurementMatrix, n: int) -> MeasurementMatrix:
    """Blow a (N/n)^2-column matrix up to superpixel-constant N x N patterns."""
    side = math.isqrt(phi_small.cols)
    if side * side != phi_small.cols:
        raise InvalidShape("pattern width is not a square number")
    e = phi_small.entries.reshape(phi_small.rows, side, side)
    e = np.repeat(np.repeat(e, n, axis=1), n, axis=2)
    N = side * n
    return MeasurementMatrix(e.reshape(phi_small.rows, N * N), phi_small.kind, N * N)


@dataclass(frozen=True)
class SingleRoundPattern:
    """Projectable form of a signed pattern: ``original == c1 * projected - c2``."""

    projected: np.ndarray
    c1: float
    c2: float

    def reconstruct(self) -> np.ndarray:
        return self.c1 * self.projected - self.c2


def to_single_round(pattern) -> SingleRoundPattern:
    p = np.asarray(pattern, dtype=np.float64).ravel()
    lo = p.min()
    hi = p.max()
    if hi == lo:
        raise DegenerateInput("constant pattern has no single-round form")
    c1 = hi - lo
    return SingleRoundPattern((p - lo) / c1, float(c1), float(-lo))


@dataclass(frozen=True)
class SamplingBudget:
    N: int
    n: int
    N_S: int
    M1: int
    M2: int
    M_total: int
    eta_patterns: float
    eta_total: float

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


AUXILIARY_PATTERNS = 2


def sampling_budget(N: int, n: int, N_S: int, M2: Optional[int] = None) -> SamplingBudget:
    """Pattern counts of the two-step scheme.

    ``M2`` defaults to full sampling of the selected region (n^2 per
    superpixel); pass a smaller count when step 2 is sub-sampled.
    """
    if n < 1 or N < 1 or N % n:
        raise IndivisibleGrid(f"superpixel size {n} does not divide {N}")
    cells = (N // n) ** 2
    if not 0 <= N_S <= cells:
        raise ValueError(f"N_S={N_S} outside [0, {cells}]")
    M1 = cells
    if M2 is None:
        M2 = n * n * N_S
    M_total = M1 + M2 + AUXILIARY_PATTERNS
    return SamplingBudget(N, n, N_S, M1, M2, M_total,
                          (M1 + M2) / (N * N), M_total / (N * N))


def save_matrix(path, phi: MeasurementMatrix) -> None:
    """Write ``phi`` densely: 16-byte header then little-endian float64, row-major."""
    header = _HEADER.pack(_MAGIC, _KIND_CODES[phi.kind], phi.rows, phi.cols)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(phi.dense().astype("<f8").tobytes(order="C"))


def load_matrix(path) -> MeasurementMatrix:
    raw = Path(path).read_bytes()
    magic, code, rows, cols = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a pattern matrix file")
    kind = {v: k for k, v in _KIND_CODES.items()}[code]
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated payload")
    data = data.reshape(rows, cols).astype(np.float64)
    if kind is MatrixKind.MASKED_SVD:
        support = np.flatnonzero(np.any(data != 0.0, axis=0))
        return MeasurementMatrix(data[:, support], kind, cols, support=support)
    return MeasurementMatrix(data, kind, cols)
