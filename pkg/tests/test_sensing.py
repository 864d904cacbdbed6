import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asvdgi.errors import DegenerateInput, DimensionMismatch
from asvdgi.patterns import MatrixKind, MeasurementMatrix, random_matrix, svd_matrix
from asvdgi.sensing import (DetectionRecord, Protocol, add_noise, measure, measure_differential,
                            measure_ideal, measure_single_round)


def test_ideal_identity_rows():
    phi = MeasurementMatrix(np.eye(9)[[2, 5, 7]], MatrixKind.RANDOM, 9)
    obj = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(measure_ideal(phi, obj).readings, [2.0, 5.0, 7.0])


def test_ideal_hand_dot_products():
    pats = np.array([[1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 1],
                     [0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0],
                     [1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
                     [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2]], dtype=float)
    obj = np.arange(16.0).reshape(4, 4)
    rec = measure_ideal(MeasurementMatrix(pats, MatrixKind.RANDOM, 16), obj)
    # 0+3+5+6+10+12+13+15, 2+3+4+8+9+14, 0+1+2+3, 2*15
    np.testing.assert_array_equal(rec.readings, [64.0, 40.0, 6.0, 30.0])
    assert rec.projections == 4


def test_zero_object_all_protocols():
    phi = svd_matrix(6, 16, 0)
    for p in Protocol:
        rec = measure(phi, np.zeros((4, 4)), p)
        np.testing.assert_array_equal(rec.signal(), 0.0)
    rec = measure_single_round(phi, np.zeros((4, 4)))
    np.testing.assert_array_equal(rec.readings, 0.0)
    assert rec.auxiliary_reading == 0.0


def test_differential_matches_ideal_and_counts():
    phi = svd_matrix(8, 16, 1)
    obj = np.random.default_rng(0).random((4, 4))
    rec = measure_differential(phi, obj)
    np.testing.assert_allclose(rec.signal(), measure_ideal(phi, obj).readings, atol=1e-12)
    assert rec.projections == 16
    ones = measure_differential(phi, np.ones((4, 4)))
    np.testing.assert_allclose(ones.pairs.sum(axis=1), 16.0, atol=1e-12)
    assert np.all(rec.pairs >= 0)


def test_single_round_counts():
    phi = svd_matrix(8, 16, 1)
    rec = measure_single_round(phi, np.ones((4, 4)))
    assert rec.projections == 9
    assert rec.auxiliary_reading == 16.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31), st.sampled_from(["random", "svd"]))
def test_single_round_and_differential_equal_ideal(m, seed, kind):
    phi = random_matrix(m, 16, seed) if kind == "random" else svd_matrix(m, 16, seed)
    obj = np.random.default_rng(seed + 1).random((4, 4))
    ideal = measure_ideal(phi, obj).readings
    np.testing.assert_allclose(measure_single_round(phi, obj).signal(), ideal, atol=1e-10)
    np.testing.assert_allclose(measure_differential(phi, obj).signal(), ideal, atol=1e-10)


def test_single_round_projected_patterns_are_physical():
    phi = svd_matrix(5, 16, 3)
    obj = np.random.default_rng(3).random(16)
    rec = measure_single_round(phi, obj)
    e = phi.entries
    lo, hi = e.min(axis=1, keepdims=True), e.max(axis=1, keepdims=True)
    projected = (e - lo) / (hi - lo)
    assert projected.min() >= 0 and projected.max() <= 1
    np.testing.assert_allclose(rec.readings, projected @ obj, atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        measure_ideal(svd_matrix(2, 16, 0), np.zeros((3, 3)))


def test_noise_vanishing_and_deterministic():
    phi = random_matrix(50, 64, 0)
    rec = measure_ideal(phi, np.random.default_rng(1).random(64))
    quiet = add_noise(rec, 300.0, 4)
    np.testing.assert_allclose(quiet.readings, rec.readings, rtol=1e-10)
    a, b = add_noise(rec, 10.0, 4), add_noise(rec, 10.0, 4)
    np.testing.assert_array_equal(a.readings, b.readings)
    assert a.noise_seed == 4 and a.snr_db == 10.0


def test_noise_power_at_zero_db():
    rng = np.random.default_rng(2)
    readings = rng.random(10_000) * 3.0
    rec = DetectionRecord(readings, Protocol.IDEAL, readings.size)
    noisy = add_noise(rec, 0.0, 7)
    ratio = np.var(noisy.readings - readings) / np.var(readings)
    assert 0.95 <= ratio <= 1.05


def test_noise_constant_readings():
    rec = DetectionRecord(np.ones(5), Protocol.IDEAL, 5)
    with pytest.raises(DegenerateInput):
        add_noise(rec, 10.0, 0)


def test_single_round_noise_touches_auxiliary():
    phi = svd_matrix(20, 64, 0)
    rec = measure_single_round(phi, np.random.default_rng(0).random(64))
    noisy = add_noise(rec, 10.0, 1)
    assert noisy.auxiliary_reading != rec.auxiliary_reading
    np.testing.assert_array_equal(noisy.coeffs, rec.coeffs)


def test_record_validation():
    with pytest.raises(ValueError):
        DetectionRecord(np.ones(2), Protocol.SINGLE_ROUND, 3)
    with pytest.raises(ValueError):
        DetectionRecord(np.ones(2), Protocol.IDEAL, 2, coeffs=np.ones((2, 2)))


@pytest.mark.parametrize("protocol", list(Protocol))
def test_record_round_trip(tmp_path, protocol):
    phi = svd_matrix(6, 16, 2)
    rec = add_noise(measure(phi, np.random.default_rng(0).random(16), protocol), 20.0, 3)
    rec.save(tmp_path / "r.csv", tmp_path / "r.json")
    text = (tmp_path / "r.csv").read_text()
    assert text.startswith("index,reading,c1,c2\n") and "\r" not in text
    back = DetectionRecord.load(tmp_path / "r.csv", tmp_path / "r.json")
    assert back.protocol is protocol and back.projections == rec.projections
    np.testing.assert_array_equal(back.signal(), rec.signal())
