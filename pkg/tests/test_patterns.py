import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asvdgi import _linalg
from asvdgi.adaptive import RegionMask, SuperpixelGrid
from asvdgi.errors import (DegenerateInput, IndivisibleGrid, InvalidShape, KindMismatch,
                           MaskMismatch, RankDeficient)
from asvdgi.patterns import (MatrixKind, MeasurementMatrix, derive_seed, expand_superpixels,
                             load_matrix, mask_columns, random_matrix, sampling_budget,
                             save_matrix, svd_matrix, svd_orthogonalize, to_single_round)


def gram_error(e):
    return np.abs(e @ e.T - np.eye(e.shape[0])).max()


def test_random_matrix_shape_range_determinism():
    phi = random_matrix(1, 4, 3)
    assert phi.shape == (1, 4) and phi.kind is MatrixKind.RANDOM
    assert np.all((phi.entries >= 0) & (phi.entries < 1))
    np.testing.assert_array_equal(random_matrix(5, 9, 11).entries, random_matrix(5, 9, 11).entries)
    assert not np.array_equal(random_matrix(5, 9, 11).entries, random_matrix(5, 9, 12).entries)


def test_random_matrix_mean():
    # 3 sigma of the mean of 64*256 uniforms is 3 * sqrt(1/12 / 16384) ~ 0.0068
    assert abs(random_matrix(64, 256, 5).entries.mean() - 0.5) < 0.06


def test_random_matrix_bad_shape():
    with pytest.raises(InvalidShape):
        random_matrix(10, 4, 0)
    with pytest.raises(InvalidShape):
        random_matrix(0, 4, 0)


def test_entries_read_only():
    phi = random_matrix(2, 3, 0)
    with pytest.raises(ValueError):
        phi.entries[0, 0] = 5.0


def test_orthogonalize_identity_slice():
    eye = MeasurementMatrix(np.eye(6)[:3], MatrixKind.RANDOM, 6)
    out = svd_orthogonalize(eye)
    np.testing.assert_allclose(np.abs(out.entries), np.eye(6)[:3], atol=1e-15)
    assert gram_error(out.entries) < 1e-15


def test_orthogonalize_2x4():
    out = svd_orthogonalize(random_matrix(2, 4, 1))
    assert out.kind is MatrixKind.SVD
    assert gram_error(out.entries) < 1e-10


def test_orthogonalize_square_is_orthogonal():
    e = svd_orthogonalize(random_matrix(16, 16, 2)).entries
    assert gram_error(e) < 1e-10
    assert np.abs(e.T @ e - np.eye(16)).max() < 1e-10


def test_orthogonalize_keeps_row_space():
    phi = random_matrix(5, 12, 3)
    q = svd_orthogonalize(phi).entries
    # each original row is reproduced by projecting onto the new rows
    np.testing.assert_allclose(phi.entries @ q.T @ q, phi.entries, atol=1e-12)


def test_gram_route_matches_lapack():
    a = random_matrix(40, 90, 4)
    lap = svd_orthogonalize(a, method="lapack").entries
    gram = svd_orthogonalize(a, method="gram").entries
    np.testing.assert_allclose(gram, lap, atol=1e-11)


def test_rank_deficient():
    e = np.ones((3, 5))
    with pytest.raises(RankDeficient):
        _linalg.polar_rows(e)
    with pytest.raises(RankDeficient):
        _linalg.polar_rows(e, method="gram")


def test_orthogonalize_rejects_masked():
    grid = SuperpixelGrid(4, 2)
    mask = RegionMask(grid, np.array([[True, False], [False, False]]))
    phi = mask_columns(svd_matrix(4, 4, 0), mask)
    with pytest.raises(KindMismatch):
        svd_orthogonalize(phi)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 30), st.integers(0, 30), st.integers(0, 2**31))
def test_orthogonality_property(m, extra, seed):
    e = svd_orthogonalize(random_matrix(m, m + extra, seed)).entries
    assert gram_error(e) < 1e-10


def test_svd_matrix_cached_and_deterministic():
    assert svd_matrix(8, 16, 3) is svd_matrix(8, 16, 3)
    np.testing.assert_array_equal(svd_matrix(8, 16, 3).entries,
                                  svd_orthogonalize(random_matrix(8, 16, 3)).entries)


def test_derive_seed_streams_differ():
    assert derive_seed(0, 1) != derive_seed(0, 2)
    assert derive_seed(5, 1) == derive_seed(5, 1)


def test_mask_whole_scene_is_identity_embedding():
    grid = SuperpixelGrid(4, 2)
    mask = RegionMask(grid, np.ones((2, 2), bool))
    small = svd_matrix(16, 16, 1)
    phi = mask_columns(small, mask)
    assert phi.kind is MatrixKind.MASKED_SVD and not phi.is_masked
    np.testing.assert_array_equal(phi.dense(), small.entries)


def test_mask_single_superpixel():
    grid = SuperpixelGrid(4, 2)
    sel = np.array([[False, False], [False, True]])
    phi = mask_columns(svd_matrix(4, 4, 1), RegionMask(grid, sel))
    d = phi.dense()
    zero_cols = np.all(d == 0, axis=0)
    assert zero_cols.sum() == 12
    # selected superpixel (1, 1) covers scene pixels (2..3, 2..3)
    np.testing.assert_array_equal(np.flatnonzero(~zero_cols), [10, 11, 14, 15])
    block = d[:, ~zero_cols]
    assert gram_error(block) < 1e-10 and np.abs(block.T @ block - np.eye(4)).max() < 1e-10


def test_mask_rows_unit_norm_and_mismatch():
    grid = SuperpixelGrid(8, 2)
    sel = np.zeros((4, 4), bool)
    sel[1, 1:3] = sel[2, 2] = True
    mask = RegionMask(grid, sel)
    phi = mask_columns(svd_orthogonalize(random_matrix(7, 12, 2)), mask)
    np.testing.assert_allclose(np.linalg.norm(phi.dense(), axis=1), 1.0, atol=1e-10)
    x = np.random.default_rng(0).random(64)
    np.testing.assert_allclose(phi.forward(x), phi.dense() @ x, atol=1e-13)
    np.testing.assert_allclose(phi.adjoint(np.arange(7.0)), phi.dense().T @ np.arange(7.0),
                               atol=1e-13)
    lo, hi = phi.row_extrema()
    np.testing.assert_array_equal(lo, phi.dense().min(axis=1))
    np.testing.assert_array_equal(hi, phi.dense().max(axis=1))
    with pytest.raises(MaskMismatch):
        mask_columns(svd_matrix(4, 4, 0), mask)


def test_expand_superpixels():
    small = MeasurementMatrix(np.array([[1.0, 2.0, 3.0, 4.0]]), MatrixKind.SVD, 4)
    big = expand_superpixels(small, 2).entries.reshape(4, 4)
    np.testing.assert_array_equal(big, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])


def test_single_round_examples():
    sr = to_single_round([-0.5, 0.0, 1.0])
    np.testing.assert_allclose(sr.projected, [0, 1 / 3, 1], atol=1e-15)
    assert sr.c1 == 1.5 and sr.c2 == 0.5
    np.testing.assert_allclose(sr.reconstruct(), [-0.5, 0.0, 1.0], atol=1e-15)
    sr = to_single_round([0.0, 2.0])
    np.testing.assert_array_equal(sr.projected, [0.0, 1.0])
    assert sr.c1 == 2.0 and sr.c2 == 0.0
    with pytest.raises(DegenerateInput):
        to_single_round([1.0, 1.0])


def test_single_round_svd_rows():
    e = svd_matrix(16, 64, 9).entries
    for row in e:
        sr = to_single_round(row)
        assert sr.projected.min() == 0.0 and sr.projected.max() == 1.0
        assert np.abs(sr.reconstruct() - row).max() < 1e-12


def test_budget_reference_figures():
    b = sampling_budget(160, 5, 207)
    assert (b.M1, b.M2, b.M_total) == (1024, 5175, 6201)
    assert round(100 * b.eta_patterns, 2) == 24.21
    assert b.eta_total == pytest.approx(6201 / 25600)


def test_budget_empty_foreground():
    for n in (2, 4, 8):
        b = sampling_budget(64, n, 0)
        assert b.M2 == 0 and b.eta_patterns == pytest.approx(1 / n**2)


def test_budget_bound_exhaustive_n4():
    N = 128
    for ns in range(0, 1025):
        b = sampling_budget(N, 4, ns)
        # M_total >= 2 N sqrt(N_S) + 2, squared to stay in integers
        assert (b.M_total - 2) ** 2 >= 4 * N * N * ns


def test_budget_errors():
    with pytest.raises(IndivisibleGrid):
        sampling_budget(10, 3, 1)
    with pytest.raises(ValueError):
        sampling_budget(8, 2, 17)


@pytest.mark.parametrize("kind", ["random", "svd", "masked"])
def test_matrix_file_round_trip(tmp_path, kind):
    if kind == "random":
        phi = random_matrix(3, 16, 0)
    elif kind == "svd":
        phi = svd_matrix(3, 16, 0)
    else:
        grid = SuperpixelGrid(4, 2)
        phi = mask_columns(svd_matrix(3, 8, 0),
                           RegionMask(grid, np.array([[True, False], [False, True]])))
    path = tmp_path / "m.bin"
    save_matrix(path, phi)
    raw = path.read_bytes()
    assert raw[:4] == b"GIPM" and len(raw) == 16 + 8 * 3 * 16
    back = load_matrix(path)
    assert back.kind is phi.kind
    np.testing.assert_array_equal(back.dense(), phi.dense())
