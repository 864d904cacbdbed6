"""Reconstruction estimators: correlation GI, differential GI, pseudo-inverse GI and SVD GI.

Every estimator returns an image normalized to [0, 1] unless
``normalize=False``.  Full-scene estimates are min-max normalized (a flat
estimate becomes all zeros).  Estimates from masked matrices are divided by
their peak over the masked pixels and clipped at 0, so the unmasked
background stays exactly 0.
"""

from __future__ import annotations

import math

import numpy as np

from . import _linalg
from .errors import DegenerateInput, DimensionMismatch, KindMismatch
from .patterns import MatrixKind, MeasurementMatrix
from .sensing import DetectionRecord


def _check(phi: MeasurementMatrix, record: DetectionRecord) -> np.ndarray:
    b = record.signal()
    if len(b) != phi.rows:
        raise DimensionMismatch(f"{len(b)} readings for {phi.rows} patterns")
    return b


def _scene_shape(phi, shape):
    if shape is not None:
        if shape[0] * shape[1] != phi.cols:
            raise DimensionMismatch(f"shape {shape} does not hold {phi.cols} pixels")
        return tuple(shape)
    side = math.isqrt(phi.cols)
    if side * side != phi.cols:
        raise DimensionMismatch("non-square scene; pass shape explicitly")
    return (side, side)


def _finish(est, phi, shape, normalize):
    img = est.reshape(_scene_shape(phi, shape))
    if not normalize:
        return img
    if phi.is_masked:
        out = np.zeros_like(img)
        flat = out.reshape(-1)
        vals = est[phi.support]
        peak = vals.max() if vals.size else 0.0
        if peak > 0.0:
            flat[phi.support] = np.clip(vals / peak, 0.0, 1.0)
        return out
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def recon_gi(phi: MeasurementMatrix, record: DetectionRecord, shape=None,
             normalize: bool = True) -> np.ndarray:
    """Correlation estimate ``(1/M) sum_i (B_i - <B>) I_i``.

    This equals ``Phi^T B / M - <B> * mean_pattern``.
    """
    b = _check(phi, record)
    est = phi.adjoint(b - b.mean()) / phi.rows
    return _finish(est, phi, shape, normalize)


def recon_dgi(phi: MeasurementMatrix, record: DetectionRecord, shape=None,
              normalize: bool = True) -> np.ndarray:
    """Differential GI: ``<B I> - (<B> / <S>) <S I>`` with ``S_i`` the total of pattern ``i``."""
    b = _check(phi, record)
    s = phi.entries.sum(axis=1)
    s_mean = s.mean()
    if abs(s_mean) <= 1e-12 * max(np.abs(s).mean(), np.finfo(float).tiny):
        raise DegenerateInput("patterns have zero mean total intensity")
    est = phi.adjoint(b - (b.mean() / s_mean) * s) / phi.rows
    return _finish(est, phi, shape, normalize)


def recon_pgi(phi: MeasurementMatrix, record: DetectionRecord, shape=None,
              normalize: bool = True, rtol: float = _linalg.RANK_RTOL) -> np.ndarray:
    """Minimum-norm least squares ``Phi^+ B``; singular values below ``rtol * s_max`` are dropped."""
    b = _check(phi, record)
    x = _linalg.pinv_solve(np.asarray(phi.entries), b, rtol=rtol)
    if phi.support is not None:
        est = np.zeros(phi.cols)
        est[phi.support] = x
    else:
        est = x
    return _finish(est, phi, shape, normalize)


def recon_svdgi(phi_svd: MeasurementMatrix, record: DetectionRecord, shape=None,
                normalize: bool = True) -> np.ndarray:
    """``Phi_svd^T B``: exact back-projection for orthonormal patterns."""
    if phi_svd.kind is MatrixKind.RANDOM:
        raise KindMismatch("SVD GI needs an orthogonalized matrix")
    b = _check(phi_svd, record)
    return _finish(phi_svd.adjoint(b), phi_svd, shape, normalize)


ESTIMATORS = {
    "gi": recon_gi,
    "dgi": recon_dgi,
    "pgi": recon_pgi,
    "svdgi": recon_svdgi,
}
