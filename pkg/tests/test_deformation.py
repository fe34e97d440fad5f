import numpy as np
import pytest

from jointmc.deformation import (DeformationState, compose, image_force, invert,
                                 jacobian_determinant, regrid_if_needed,
                                 solve_implicit_diffusion, update_phi)
from jointmc.errors import InversionFailed
from jointmc.fields import displacement_gradient, warp
from jointmc.phantom import smoothstep_window


def bump(n=24, amp=1.0, axis=1):
    w = smoothstep_window(n, 0.3)
    z = np.zeros((2, n, n))
    z[axis] = amp * w[:, None] * w[None, :]
    return z


def blob(n=24):
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    return np.exp(-((xx - n / 2) ** 2 + (yy - n / 2) ** 2) / (2 * (n / 6) ** 2))


def test_jacobian_identity_and_linear():
    assert np.all(jacobian_determinant(np.zeros((2, 8, 8))) == 1.0)
    yy, xx = np.mgrid[0:8, 0:8].astype(float)
    z = np.stack([0.5 * xx, -0.25 * yy])
    det = jacobian_determinant(z)
    np.testing.assert_allclose(det[:-1, :-1], 1.5 * 0.75)


def test_implicit_diffusion_matches_dense_solve():
    rng = np.random.default_rng(0)
    H, W, alpha = 7, 9, 0.8
    rhs = rng.standard_normal((H, W))
    ny, nx = H - 2, W - 2
    n = ny * nx
    A = np.eye(n) * (1 + 4 * alpha)
    for r in range(ny):
        for c in range(nx):
            i = r * nx + c
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < ny and 0 <= cc < nx:
                    A[i, rr * nx + cc] = -alpha
    ref = np.linalg.solve(A, rhs[1:-1, 1:-1].ravel()).reshape(ny, nx)
    out = solve_implicit_diffusion(rhs, alpha)
    np.testing.assert_allclose(out[1:-1, 1:-1], ref, atol=1e-12)
    assert np.all(out[0] == 0) and np.all(out[:, -1] == 0)


def test_update_phi_stays_at_rest():
    n = 16
    w = blob(n)
    z = update_phi(np.zeros((2, n, n)), np.zeros((2, 2, n, n)), w, w, 5.0, 10.0, 0.1)
    np.testing.assert_allclose(z, 0.0, atol=1e-14)


def test_update_phi_descends_matching_energy():
    n = 24
    truth = blob(n)
    z_true = bump(n, 1.0)
    u = warp(truth, z_true)  # u = w o phi_true
    w = truth
    z = np.zeros((2, n, n))
    v = np.zeros((2, 2, n, n))
    gamma1, gamma2 = 0.5, 100.0

    def E(z):
        return 0.5 * gamma1 * np.sum((v - displacement_gradient(z)) ** 2) + \
            0.5 * gamma2 * np.sum((warp(w, z) - u) ** 2)

    e = e0 = E(z)
    for _ in range(200):
        z = update_phi(z, v, w, u, gamma1, gamma2, 0.05)
        e_new = E(z)
        assert e_new < e
        e = e_new
    # the flow moves the deformation towards the truth where the image has texture
    assert 0.5 < z[1].max() < 1.2
    assert e < 0.1 * e0


def test_image_force_zero_when_matched():
    n = 12
    w = blob(n)
    assert np.all(image_force(np.zeros((2, n, n)), w, w) == 0)


def test_invert_translation_bump():
    z = bump(24, 1.5)
    z_inv, err = invert(z, tol=1e-8, max_iter=200)
    assert err < 1e-6
    back = compose(z, z_inv)
    np.testing.assert_allclose(back, 0.0, atol=1e-6)
    # a uniform shift inverts to its negative in the flat interior
    assert z_inv[1, 12, 12] == pytest.approx(-1.5, abs=1e-6)


def test_invert_reports_non_contraction(monkeypatch):
    calls = []

    def growing(f, cx, cy):
        # every fixed-point sweep returns a field twice as far away as the last
        calls.append(1)
        return np.full(cx.shape, 2.0 ** (len(calls) // 2))

    monkeypatch.setattr("jointmc.deformation.sample", growing)
    with pytest.raises(InversionFailed):
        invert(bump(16, 1.0), tol=1e-12, max_iter=100)


def test_compose_with_identity():
    z = bump(16, 0.7)
    zero = np.zeros_like(z)
    np.testing.assert_allclose(compose(z, zero), z, atol=1e-14)
    np.testing.assert_allclose(compose(zero, z), z, atol=1e-14)


def test_regrid_saves_previous_and_resets():
    n = 16
    state = DeformationState(bump(n, 8.0))
    prev = bump(n, 1.0)
    v = np.ones((2, 2, n, n))
    w = blob(n)
    assert jacobian_determinant(state.z).min() < 0.05
    new, v2, w2, flag = regrid_if_needed(state, v, w, 0.05, prev)
    assert flag and new.regrid_count == 1
    assert np.all(new.z == 0) and np.all(v2 == 0)
    np.testing.assert_array_equal(new.saved[0], prev)
    np.testing.assert_allclose(w2, warp(w, prev))
    np.testing.assert_allclose(new.total(), prev, atol=1e-14)


def test_no_regrid_when_healthy():
    state = DeformationState(bump(16, 0.3))
    out = regrid_if_needed(state, np.zeros((2, 2, 16, 16)), blob(16))
    assert out[3] is False and out[0] is state
