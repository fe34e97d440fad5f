import struct

import numpy as np
import pytest

from jointmc import io


def test_scalar_layout(tmp_path):
    f = np.arange(6.0).reshape(2, 3)
    path = io.write_scalar(tmp_path / "f.f64", f)
    raw = path.read_bytes()
    assert struct.unpack("<II", raw[:8]) == (3, 2)
    assert struct.unpack("<6d", raw[8:]) == tuple(range(6))
    np.testing.assert_array_equal(io.read_scalar(path), f)


def test_displacement_and_kspace_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    z = rng.standard_normal((2, 5, 7))
    io.write_displacement(tmp_path / "z.f64", z)
    np.testing.assert_array_equal(io.read_displacement(tmp_path / "z.f64"), z)
    x = rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7))
    path = io.write_kspace(tmp_path / "x.f64", x)
    np.testing.assert_array_equal(io.read_kspace(path), x)
    # interleaved (real, imag) pairs
    assert struct.unpack("<2d", path.read_bytes()[8:24]) == (x[0, 0].real, x[0, 0].imag)


def test_truncated_file_rejected(tmp_path):
    path = io.write_scalar(tmp_path / "f.f64", np.zeros((4, 4)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        io.read_scalar(path)


def test_pgm(tmp_path):
    img = np.linspace(-1, 3, 20).reshape(4, 5)
    path = io.write_pgm(tmp_path / "a.pgm", img)
    assert path.read_bytes().startswith(b"P5\n5 4\n255\n")
    back = io.read_pgm(path)
    assert back.shape == (4, 5)
    assert back.min() == 0 and back.max() == 255


def test_uint8_maps():
    assert np.all(io.to_uint8(np.ones((3, 3))) == 0)
    d = np.array([[-2.0, 0.0, 1.0]])
    np.testing.assert_array_equal(io.to_uint8_symmetric(d), [[0, 128, 191]])
    assert np.all(io.to_uint8_symmetric(np.zeros((2, 2))) == 128)
