"""Ogden-type stored energy and the per-pixel update of the displacement-gradient variable.

Convention: the auxiliary tensor field ``v`` stands for the displacement
gradient, so the deformation gradient is ``F = I + v``. Every determinant and
Frobenius norm below is taken of ``F``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, StepDiverged
from .fields import displacement_gradient


@dataclass(frozen=True)
class OgdenParams:
    a1: float = 1.0
    a2: float = 50.0

    def __post_init__(self):
        if not (self.a1 > 0 and self.a2 > 0):
            raise InvalidParameter(f"a1 and a2 must be positive, got {self.a1}, {self.a2}")


def _det(F):
    return F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]


def w_op(F, p: OgdenParams = OgdenParams()):
    """Stored energy ``a1 |F|^4 + a2 (det F - 1/det F)^4``, infinite when ``det F <= 0``.

    ``F`` is a 2x2 matrix or a ``(2, 2, ...)`` stack of them; the result has the
    trailing shape.
    """
    F = np.asarray(F, dtype=float)
    det = _det(F)
    fro2 = np.sum(F * F, axis=(0, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = p.a1 * fro2 ** 2 + p.a2 * (det - 1.0 / det) ** 4
    return np.where(det > 0, val, np.inf)


def gamma_prime(delta):
    """Derivative of ``(delta - 1/delta)^4``, i.e. ``4 c0 c1``."""
    delta = np.asarray(delta, dtype=float)
    if np.any(delta <= 0):
        raise InvalidParameter("gamma_prime is only defined for delta > 0")
    c0 = (delta - 1.0 / delta) ** 3
    c1 = 1.0 + 1.0 / delta ** 2
    out = 4.0 * c0 * c1
    return out if out.ndim else float(out)


def w_op_force(v, p: OgdenParams = OgdenParams()):
    """``-dW/dF`` evaluated at ``F = I + v``, same layout as ``v``.

    Written out component by component, matching the cofactor structure of
    the semi-implicit scheme.
    """
    v = np.asarray(v, dtype=float)
    v11, v12, v21, v22 = v[0, 0], v[0, 1], v[1, 0], v[1, 1]
    det = (1.0 + v11) * (1.0 + v22) - v12 * v21
    fro2 = (1.0 + v11) ** 2 + v12 ** 2 + v21 ** 2 + (1.0 + v22) ** 2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        c0c1 = (det - 1.0 / det) ** 3 * (1.0 + 1.0 / det ** 2)
        out = np.empty_like(v)
        out[0, 0] = -4 * p.a1 * fro2 * (v11 + 1.0) - 4 * p.a2 * (1.0 + v22) * c0c1
        out[0, 1] = -4 * p.a1 * fro2 * v12 + 4 * p.a2 * v21 * c0c1
        out[1, 0] = -4 * p.a1 * fro2 * v21 + 4 * p.a2 * v12 * c0c1
        out[1, 1] = -4 * p.a1 * fro2 * (v22 + 1.0) - 4 * p.a2 * (1.0 + v11) * c0c1
    return out


def update_v(v, z, p: OgdenParams, gamma1: float, dt: float, grad_z=None):
    """One semi-implicit step of the displacement-gradient variable.

    The stored-energy force is explicit at the current ``v``; the coupling to
    ``grad z`` is implicit and folded into the ``1 / (1 + dt gamma1)`` factor.
    ``grad_z`` may be passed to skip recomputing it.
    """
    if grad_z is None:
        grad_z = displacement_gradient(z)
    with np.errstate(over="ignore", invalid="ignore"):
        new = (v + dt * (w_op_force(v, p) + gamma1 * grad_z)) / (1.0 + dt * gamma1)
    bad = ~np.isfinite(new).all(axis=(0, 1))
    if bad.any():
        pixel = tuple(int(i) for i in np.argwhere(bad)[0])
        raise StepDiverged(f"displacement-gradient update diverged at pixel {pixel}", pixel)
    return new


def coupling_energy(v, z, p: OgdenParams, gamma1: float):
    """``sum W(I + v) + gamma1/2 |v - grad z|^2`` for a single acquisition."""
    F = np.asarray(v) + np.eye(2)[:, :, None, None]
    return float(np.sum(w_op(F, p)) + 0.5 * gamma1 * np.sum((v - displacement_gradient(z)) ** 2))
