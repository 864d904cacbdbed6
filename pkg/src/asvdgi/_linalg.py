"""Dense factorizations behind pattern orthogonalization and pseudo-inversion.

Small matrices go through LAPACK's economy SVD.  Large ones (more than
``LAPACK_MAX_ENTRIES`` entries) use the eigendecomposition of the row Gram
matrix ``A A^T = U S^2 U^T`` instead: it needs roughly a third of the memory
of ``gesdd`` and about half the time on one core, which is what makes
8192 x 16384 matrices tractable at all.
"""

from __future__ import annotations

import numpy as np

from .errors import RankDeficient

LAPACK_MAX_ENTRIES = 2048 * 2048
# sigma_min / sigma_max below which the matrix is treated as rank deficient
RANK_RTOL = 1e-12
# the Gram route squares the condition number, so it cannot resolve ratios
# below ~sqrt(eps); its rank test is correspondingly coarser
GRAM_RANK_RTOL = 1e-7
_BLOCK = 2048


def _use_lapack(a, method):
    if method == "lapack":
        return True
    if method == "gram":
        return False
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    return a.size <= LAPACK_MAX_ENTRIES


def _gram_eigh(a):
    g = a @ a.T
    w, q = np.linalg.eigh(g)
    return w, q


def polar_rows(a: np.ndarray, method: str = "auto") -> np.ndarray:
    """Return ``U V^T`` for the thin SVD ``a = U S V^T`` (all singular values -> 1).

    ``a`` must be wide or square with full row rank.
    """
    m, n = a.shape
    if m > n:
        raise ValueError("polar_rows expects rows <= cols")
    if _use_lapack(a, method):
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        if s[-1] < RANK_RTOL * s[0]:
            raise RankDeficient(f"sigma_min/sigma_max = {s[-1] / s[0]:.3e}")
        return u @ vt

    w, q = _gram_eigh(a)
    if w[0] <= (GRAM_RANK_RTOL ** 2) * w[-1]:
        raise RankDeficient(f"Gram eigenvalue ratio {w[0] / w[-1]:.3e}")
    # (A A^T)^{-1/2} A == U V^T
    c = (q * w ** -0.5) @ q.T
    del q
    x = c @ a
    del c
    # one Newton-Schulz sweep x <- (1.5 I - 0.5 x x^T) x restores the
    # orthonormality lost to cond(A)^2; column blocks are independent, so the
    # update runs in place
    k = x @ x.T
    k *= -0.5
    k[np.diag_indices_from(k)] += 1.5
    for j in range(0, n, _BLOCK):
        x[:, j:j + _BLOCK] = k @ x[:, j:j + _BLOCK]
    return x


def pinv_solve(a: np.ndarray, b: np.ndarray, rtol: float = RANK_RTOL,
               method: str = "auto") -> np.ndarray:
    """Minimum-norm least-squares solution of ``a x = b`` via a truncated SVD."""
    if _use_lapack(a, method) or a.shape[0] > a.shape[1]:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        keep = s > rtol * s[0]
        coef = (u[:, keep].T @ b) / s[keep]
        return vt[keep].T @ coef

    w, q = _gram_eigh(a)
    keep = w > max(rtol, GRAM_RANK_RTOL) ** 2 * w[-1]
    q = q[:, keep]
    coef = q @ ((q.T @ b) / w[keep])
    return a.T @ coef
