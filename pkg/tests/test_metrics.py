import numpy as np
import pytest

from jointmc.errors import DegenerateInput, GridMismatch, InvalidParameter
from jointmc.metrics import (difference_map, endpoint_error, entropy, joint_histogram,
                             mutual_information, psnr, ssd)


def test_psnr_definition():
    a = np.zeros((4, 4))
    assert psnr(a, a) == float("inf")
    assert psnr(a, np.ones((4, 4)), peak=1.0) == pytest.approx(0.0)
    rng = np.random.default_rng(0)
    b, c = rng.uniform(size=(2, 16, 16))
    direct = 10 * np.log10(2.0 ** 2 / np.mean((b - c) ** 2))
    assert abs(psnr(b, c, 2.0) - direct) < 1e-10


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(1)
    img = rng.uniform(size=(32, 32))
    noise = rng.standard_normal((32, 32))
    vals = [psnr(img, img + s * noise) for s in (0.01, 0.05, 0.2)]
    assert vals[0] > vals[1] > vals[2]


def test_psnr_errors():
    with pytest.raises(GridMismatch):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(InvalidParameter):
        psnr(np.zeros((4, 4)), np.ones((4, 4)), peak=0.0)


def test_ssd():
    assert ssd(np.zeros((2, 2)), np.full((2, 2), 2.0)) == 16.0


def test_mi_self_equals_entropy_and_symmetry():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(size=(2, 64, 64))
    b = 0.5 * a + 0.5 * b
    assert mutual_information(a, a) == pytest.approx(entropy(a), abs=1e-12)
    assert mutual_information(a, b) == mutual_information(b, a)
    assert mutual_information(a, b) >= -1e-12


def test_mi_of_independent_fields_is_small():
    rng = np.random.default_rng(3)
    a, b = rng.uniform(size=(2, 64, 64))
    assert mutual_information(a, b, bins=32) < 0.3
    # the plug-in estimator is biased upwards by about (bins-1)^2 / (2N)
    a, b = rng.uniform(size=(2, 512, 512))
    assert mutual_information(a, b, bins=32) < 0.05


def test_mi_matches_direct_sum():
    rng = np.random.default_rng(4)
    a, b = rng.uniform(size=(2, 20, 20))
    bins = 4
    ia = np.clip(np.floor((a - a.min()) / np.ptp(a) * bins), 0, bins - 1).astype(int)
    ib = np.clip(np.floor((b - b.min()) / np.ptp(b) * bins), 0, bins - 1).astype(int)
    total = 0.0
    for i in range(bins):
        for j in range(bins):
            pxy = np.mean((ia == i) & (ib == j))
            if pxy > 0:
                total += pxy * np.log(pxy / (np.mean(ia == i) * np.mean(ib == j)))
    assert mutual_information(a, b, bins) == pytest.approx(total, abs=1e-12)
    assert joint_histogram(a, b, bins).sum() == a.size


def test_mi_rejects_constant_image():
    with pytest.raises(DegenerateInput):
        mutual_information(np.ones((8, 8)), np.random.default_rng(0).uniform(size=(8, 8)))
    with pytest.raises(InvalidParameter):
        mutual_information(np.eye(4), np.eye(4), bins=1)


def test_endpoint_error():
    z = np.random.default_rng(5).standard_normal((2, 10, 10))
    assert endpoint_error(z, z) == (0.0, 0.0)
    shifted = z.copy()
    shifted[0] += 0.3
    shifted[1] -= 0.4
    mean, mx = endpoint_error(shifted, z)
    assert mean == pytest.approx(0.5) and mx == pytest.approx(0.5)
    w = np.random.default_rng(6).standard_normal((2, 10, 10))
    e = np.sqrt((z[0] - w[0]) ** 2 + (z[1] - w[1]) ** 2)[2:8, 2:8]
    assert endpoint_error(z, w, 2) == pytest.approx((e.mean(), e.max()))
    with pytest.raises(InvalidParameter):
        endpoint_error(z, w, 5)


def test_difference_map():
    rng = np.random.default_rng(7)
    u, r = rng.uniform(size=(2, 6, 6))
    assert np.all(difference_map(u, u) == 0)
    np.testing.assert_allclose(difference_map(u, u + 0.25), -0.25)
    np.testing.assert_array_equal(difference_map(u, r), u - r)
