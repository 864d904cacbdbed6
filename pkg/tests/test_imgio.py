import numpy as np
import pytest
from PIL import Image

from asvdgi.imgio import read_image, read_pbm, read_raw, to_uint8, write_image, write_pbm, write_raw


@pytest.mark.parametrize("suffix", [".pgm", ".png"])
def test_round_trip(tmp_path, suffix):
    img = np.arange(256, dtype=float).reshape(16, 16) / 255
    path = tmp_path / f"x{suffix}"
    write_image(path, img, normalize=False)
    np.testing.assert_array_equal(read_image(path), img)


def test_normalized_write(tmp_path):
    write_image(tmp_path / "a.png", np.array([[-2.0, 0.0], [2.0, 1.0]]))
    np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "a.png")),
                                  [[0, 128], [255, 191]])
    np.testing.assert_array_equal(to_uint8(np.full((2, 2), 5.0)), 0)


def test_raw_round_trip(tmp_path):
    img = np.random.default_rng(0).normal(size=(5, 7))
    write_raw(tmp_path / "x.f64", img)
    assert (tmp_path / "x.f64").stat().st_size == 5 * 7 * 8
    np.testing.assert_array_equal(read_raw(tmp_path / "x.f64", (5, 7)), img)


def test_pbm_on_bits_render_white(tmp_path):
    bits = np.random.default_rng(1).random((5, 13)) < 0.5
    write_pbm(tmp_path / "b.pbm", bits)
    np.testing.assert_array_equal(read_pbm(tmp_path / "b.pbm"), bits)
    with Image.open(tmp_path / "b.pbm") as im:
        grey = np.asarray(im.convert("L"))
    np.testing.assert_array_equal(grey == 255, bits)
