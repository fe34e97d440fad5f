"""Weighted total variation and its proximal map by Chambolle's projection."""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameter
from .fields import divergence, gradient


def tv_g(f, g):
    """Discrete weighted TV: ``sum_x g(x) |grad f(x)|`` (isotropic)."""
    grad = gradient(f)
    return float(np.sum(np.asarray(g) * np.hypot(grad[0], grad[1])))


def prox_objective(f, w, g, theta: float):
    """``1/(2 theta) |f - w|^2 + TV_g(f)``."""
    return float(0.5 / theta * np.sum((np.asarray(f) - w) ** 2)) + tv_g(f, g)


def prox_wtv(w, g, theta: float = 5.0, n_iter: int = 500, delta_t: float = 0.125,
             callback=None, return_dual: bool = False):
    """Approximate ``argmin_f 1/(2 theta) |f - w|^2 + TV_g(f)``.

    Runs the weighted Chambolle fixed point from ``p = 0``; the dual field
    stays in the pointwise ball ``|p| <= g`` by construction.

    ``callback(n, f, p)`` is invoked after every iteration if given.
    """
    if not theta > 0:
        raise InvalidParameter(f"theta must be positive, got {theta}")
    if not 0 < delta_t <= 0.125:
        raise InvalidParameter(f"delta_t must lie in (0, 1/8], got {delta_t}")
    if n_iter < 1:
        raise InvalidParameter(f"n_iter must be >= 1, got {n_iter}")
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    p = np.zeros((2,) + w.shape)
    div_p = np.zeros_like(w)
    for n in range(n_iter):
        q = gradient(div_p - w / theta)
        p = (p + delta_t * q) / (1.0 + (delta_t / g) * np.hypot(q[0], q[1]))
        div_p = divergence(p)
        if callback is not None:
            callback(n, w - theta * div_p, p)
    f = w - theta * div_p
    return (f, p) if return_dual else f
