"""Deformation machinery: Jacobians, the registration gradient flow, inversion,
composition and the regridding safeguard.

A deformation is stored as its displacement ``z`` (``phi = Id + z``), see
:mod:`jointmc.fields` for the array layout. Displacements vanish on the
outer pixel ring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .errors import InversionFailed, LinearSolveFailed
from .fields import (central_gradient, coordinates, displacement_gradient, divergence,
                     same_grid, sample, warp)


def jacobian_determinant(z):
    """``det(I + grad z)`` per pixel, forward-difference stencil."""
    J = displacement_gradient(z)
    return (1.0 + J[0, 0]) * (1.0 + J[1, 1]) - J[0, 1] * J[1, 0]


def compose(outer, inner):
    """Displacement of ``(Id + outer) o (Id + inner)``."""
    outer = np.asarray(outer, dtype=float)
    inner = np.asarray(inner, dtype=float)
    same_grid(outer, inner)
    xx, yy = coordinates(inner.shape[-2:])
    cx, cy = xx + inner[0], yy + inner[1]
    return inner + np.stack([sample(outer[0], cx, cy), sample(outer[1], cx, cy)])


def _dirichlet_laplacian(u):
    """5-point Laplacian of an interior block with zero exterior ring."""
    up = np.pad(u, 1)
    return up[:-2, 1:-1] + up[2:, 1:-1] + up[1:-1, :-2] + up[1:-1, 2:] - 4.0 * u


def solve_implicit_diffusion(rhs, alpha, rtol=1e-8):
    """Solve ``(Id - alpha Lap) u = rhs`` on the interior with ``u = 0`` on the border.

    Diagonalized exactly by the type-I sine transform; the residual is checked
    against ``rtol`` anyway so a numerical failure cannot pass silently.
    """
    rhs = np.asarray(rhs, dtype=float)
    H, W = rhs.shape
    b = rhs[1:-1, 1:-1]
    ny, nx = b.shape
    ly = -4.0 * np.sin(np.pi * np.arange(1, ny + 1) / (2.0 * (ny + 1))) ** 2
    lx = -4.0 * np.sin(np.pi * np.arange(1, nx + 1) / (2.0 * (nx + 1))) ** 2
    denom = 1.0 - alpha * (ly[:, None] + lx[None, :])
    u = fft.idstn(fft.dstn(b, type=1, norm="ortho") / denom, type=1, norm="ortho")
    scale = np.linalg.norm(b)
    res = np.linalg.norm(u - alpha * _dirichlet_laplacian(u) - b)
    if scale > 0 and res > rtol * scale:
        raise LinearSolveFailed(f"implicit diffusion solve residual {res / scale:.3e} exceeds {rtol}",
                                residual=res / scale)
    out = np.zeros((H, W))
    out[1:-1, 1:-1] = u
    return out


def image_force(z, w, u, grad_w=None):
    """``(w o phi - u) grad w(phi)``, the pointwise derivative of the matching term."""
    xx, yy = coordinates(u.shape)
    cx, cy = xx + z[0], yy + z[1]
    resid = sample(w, cx, cy) - u
    gw = central_gradient(w) if grad_w is None else grad_w
    return np.stack([resid * sample(gw[0], cx, cy), resid * sample(gw[1], cx, cy)])


def update_phi(z, v, w, u, gamma1: float, gamma2: float, dt: float, grad_w=None):
    """One semi-implicit Euler step of the L2 gradient flow for the deformation.

    Descends ``gamma1/2 |v - grad z|^2 + gamma2/2 |w o phi - u|^2`` with the
    diffusion part implicit and Dirichlet ``z = 0`` on the border. ``grad_w``
    may carry a precomputed :func:`central_gradient` of ``w``.
    """
    z = np.asarray(z, dtype=float)
    same_grid(z, v, w, u)
    force = -gamma1 * np.stack([divergence(v[0]), divergence(v[1])])
    force -= gamma2 * image_force(z, w, u, grad_w)
    rhs = z + dt * force
    return np.stack([solve_implicit_diffusion(rhs[c], dt * gamma1) for c in range(2)])


def invert(z, tol: float = 1e-3, max_iter: int = 50):
    """Fixed-point inversion ``z_inv <- -z(x + z_inv(x))``.

    Returns ``(z_inv, err)`` where ``err`` is the sup-norm of
    ``phi(phi^-1(x)) - x`` at the returned iterate.
    """
    z = np.asarray(z, dtype=float)
    xx, yy = coordinates(z.shape[-2:])
    z_inv = np.zeros_like(z)
    last = np.inf
    growing = 0
    for _ in range(max_iter):
        cx, cy = xx + z_inv[0], yy + z_inv[1]
        new = -np.stack([sample(z[0], cx, cy), sample(z[1], cx, cy)])
        step = float(np.max(np.abs(new - z_inv)))
        z_inv = new
        if step < tol:
            break
        growing = growing + 1 if step > last else 0
        if growing >= 10:
            raise InversionFailed(f"fixed-point inversion is not contracting (update {step:.3g} px)")
        last = step
    cx, cy = xx + z_inv[0], yy + z_inv[1]
    err = float(np.max(np.abs(z_inv + np.stack([sample(z[0], cx, cy), sample(z[1], cx, cy)]))))
    return z_inv, err


@dataclass
class DeformationState:
    """Current incremental displacement plus the deformations saved at regrids.

    The effective map is ``saved[0] o saved[1] o ... o (Id + z)``.
    """

    z: np.ndarray
    saved: list = field(default_factory=list)
    regrid_count: int = 0

    @classmethod
    def identity(cls, shape):
        return cls(np.zeros((2,) + tuple(shape)))

    def saved_total(self):
        if not self.saved:
            return np.zeros_like(self.z)
        acc = self.saved[0]
        for s in self.saved[1:]:
            acc = compose(acc, s)
        return acc

    def total(self):
        if not self.saved:
            return self.z.copy()
        return compose(self.saved_total(), self.z)

    def copy(self):
        return DeformationState(self.z.copy(), [s.copy() for s in self.saved], self.regrid_count)


def regrid_if_needed(state: DeformationState, v, w, det_floor: float = 0.05, previous_z=None):
    """Restart the deformation at identity when its Jacobian gets too small.

    When ``min det(I + grad z) < det_floor`` the last acceptable displacement
    (``previous_z`` if given and non-zero, else the current one) is saved, ``z`` and ``v``
    are reset to zero and the working image ``w`` is replaced by ``w`` composed
    with the saved map. Returns ``(state, v, w, regridded)``; inputs are not
    modified.
    """
    if jacobian_determinant(state.z).min() >= det_floor:
        return state, v, w, False
    keep = state.z
    if previous_z is not None and np.any(previous_z):
        keep = np.asarray(previous_z, dtype=float)
    new_state = DeformationState(np.zeros_like(state.z), [s.copy() for s in state.saved] + [keep.copy()],
                                 state.regrid_count + 1)
    return new_state, np.zeros_like(v), warp(w, keep), True
