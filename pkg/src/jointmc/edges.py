"""Edge-stopping weights for the weighted total variation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .fields import gaussian_blur, gradient
from .fourier import adjoint


@dataclass(frozen=True)
class WeightMap:
    g: np.ndarray
    floor: float
    lam: float

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.g, dtype=dtype)


def edge_magnitude(image, sigma: float):
    """Gradient magnitude of the Gaussian-smoothed image."""
    grad = gradient(gaussian_blur(image, sigma))
    return np.hypot(grad[0], grad[1])


def edge_stopping(r, lam: float, floor: float):
    """``max(floor, 1 / (1 + (r / lam)^2))``."""
    return np.maximum(floor, 1.0 / (1.0 + (np.asarray(r) / lam) ** 2))


def weight_map(xi, sigma: float = 2.0, lam: float | None = None, floor: float = 0.01,
               percentile: float = 90.0) -> WeightMap:
    """Weight map g for one k-space acquisition.

    ``lam`` defaults to the given percentile of the smoothed edge magnitude,
    which makes g invariant to a global rescaling of the intensities. A flat
    image has no edges and yields g = 1 everywhere.
    """
    return weight_map_from_image(adjoint(xi), sigma, lam, floor, percentile)


def weight_map_from_image(image, sigma: float = 2.0, lam: float | None = None,
                          floor: float = 0.01, percentile: float = 90.0) -> WeightMap:
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    if not 0 < floor < 1:
        raise InvalidParameter(f"floor must lie in (0, 1), got {floor}")
    if lam is not None and not lam > 0:
        raise InvalidParameter(f"lambda must be positive, got {lam}")
    r = edge_magnitude(image, sigma)
    # rounding noise from blurring a flat image is not an edge
    r[r <= 1e-12 * np.abs(image).max()] = 0.0
    if lam is None:
        lam = float(np.percentile(r, percentile))
        if not lam > 0:
            # mostly flat image: take the percentile over the edge pixels only
            nz = r[r > 0]
            if nz.size == 0:
                return WeightMap(np.ones_like(r), floor, 0.0)
            lam = float(np.percentile(nz, percentile))
    return WeightMap(edge_stopping(r, lam, floor), floor, float(lam))
