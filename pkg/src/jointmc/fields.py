"""Grid-aligned fields and the finite-difference calculus shared by the solver.

Fields are plain numpy arrays indexed ``[row, col]`` (``row`` = y, ``col`` = x):

* scalar field: ``(H, W)`` float64
* displacement field: ``(2, H, W)``, component 0 is the x displacement
  (along columns), component 1 the y displacement (along rows), in pixels
* tensor field: ``(2, 2, H, W)``, ``m[a, b] = d z_a / d x_b`` so that
  ``m[0, 0]`` is v11, ``m[0, 1]`` is v12 and so on
* vector field (gradient output, dual variable): ``(2, H, W)`` ordered (x, y)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidParameter, GridMismatch


@dataclass(frozen=True)
class Grid2D:
    width: int
    height: int
    spacing: float = 1.0

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise InvalidParameter(f"grid must be at least 4x4, got {self.width}x{self.height}")
        if not self.spacing > 0:
            raise InvalidParameter(f"spacing must be positive, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.width * self.height

    @classmethod
    def of(cls, array) -> "Grid2D":
        a = np.asarray(array)
        return cls(width=a.shape[-1], height=a.shape[-2])


def same_grid(*arrays) -> tuple[int, int]:
    """Return the common ``(H, W)`` of the trailing two axes or raise."""
    shapes = {np.shape(a)[-2:] for a in arrays}
    if len(shapes) != 1:
        raise GridMismatch(f"fields live on different grids: {sorted(shapes)}")
    return shapes.pop()


def gradient(f):
    """Forward-difference gradient, zero on the last column/row.

    Returns a ``(2, H, W)`` array holding (d/dx, d/dy).
    """
    f = np.asarray(f, dtype=float)
    g = np.zeros((2,) + f.shape)
    g[0, :, :-1] = f[:, 1:] - f[:, :-1]
    g[1, :-1, :] = f[1:, :] - f[:-1, :]
    return g


def divergence(p):
    """Backward-difference divergence, the negative adjoint of :func:`gradient`."""
    p = np.asarray(p, dtype=float)
    px, py = p[0], p[1]
    d = np.zeros(px.shape)
    d[:, 0] = px[:, 0]
    d[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    d[:, -1] = -px[:, -2]
    d[0, :] += py[0, :]
    d[1:-1, :] += py[1:-1, :] - py[:-2, :]
    d[-1, :] -= py[-2, :]
    return d


def displacement_gradient(z):
    """Tensor field ``(2, 2, H, W)`` with rows ``gradient(z[0])``, ``gradient(z[1])``."""
    z = np.asarray(z, dtype=float)
    return np.stack([gradient(z[0]), gradient(z[1])])


def central_gradient(f):
    """Central differences (one-sided at the edges), ordered (d/dx, d/dy).

    Used for the image force of the registration step, where a forward
    stencil would bias the sampled gradient by half a pixel.
    """
    gy, gx = np.gradient(np.asarray(f, dtype=float))
    return np.stack([gx, gy])


def sample(f, cx, cy):
    """Bilinear interpolation of ``f`` at column/row coordinates ``(cx, cy)``.

    ``f`` is extended by zero outside the grid, so a sample half a pixel past
    the border gets half the border value and anything a full pixel out is 0.
    """
    f = np.asarray(f, dtype=float)
    H, W = f.shape
    fp = np.zeros((H + 2, W + 2))
    fp[1:-1, 1:-1] = f
    cx = np.clip(np.asarray(cx, dtype=float) + 1.0, 0.0, W + 1.0)
    cy = np.clip(np.asarray(cy, dtype=float) + 1.0, 0.0, H + 1.0)
    x0 = np.minimum(np.floor(cx).astype(np.intp), W)
    y0 = np.minimum(np.floor(cy).astype(np.intp), H)
    tx = cx - x0
    ty = cy - y0
    return ((1.0 - ty) * ((1.0 - tx) * fp[y0, x0] + tx * fp[y0, x0 + 1])
            + ty * ((1.0 - tx) * fp[y0 + 1, x0] + tx * fp[y0 + 1, x0 + 1]))


def coordinates(shape):
    """Pixel coordinate arrays ``(xx, yy)`` for an ``(H, W)`` grid."""
    H, W = shape
    yy, xx = np.mgrid[0:H, 0:W].astype(float)
    return xx, yy


def warp(f, z):
    """Compose ``f`` with ``Id + z``: ``out(x) = f(x + z(x))``."""
    f = np.asarray(f, dtype=float)
    z = np.asarray(z, dtype=float)
    same_grid(f, z)
    xx, yy = coordinates(f.shape)
    return sample(f, xx + z[0], yy + z[1])


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian (standard deviation ``sigma``), radius ``ceil(3 sigma)``."""
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(f, sigma: float):
    """Separable truncated Gaussian smoothing with half-sample symmetric boundary."""
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(np.asarray(f, dtype=float), k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


# -- resampling between pyramid levels --------------------------------------

def downsample(f):
    """2x2 box-filter decimation; an odd trailing row/column is folded in by edge padding."""
    f = np.asarray(f, dtype=float)
    H, W = f.shape
    f = np.pad(f, ((0, H % 2), (0, W % 2)), mode="edge")
    return 0.25 * (f[0::2, 0::2] + f[1::2, 0::2] + f[0::2, 1::2] + f[1::2, 1::2])


def upsample(f, shape):
    """Bilinear prolongation to ``shape`` using pixel-centre alignment."""
    f = np.asarray(f, dtype=float)
    H, W = f.shape
    Ht, Wt = shape
    cy = (np.arange(Ht) + 0.5) * (H / Ht) - 0.5
    cx = (np.arange(Wt) + 0.5) * (W / Wt) - 0.5
    cy, cx = np.meshgrid(np.clip(cy, 0, H - 1), np.clip(cx, 0, W - 1), indexing="ij")
    return sample(f, cx, cy)


def upsample_displacement(z, shape):
    """Prolong a displacement field, rescaling the vectors by the grid ratio."""
    z = np.asarray(z, dtype=float)
    H, W = z.shape[-2:]
    Ht, Wt = shape
    out = np.stack([upsample(z[0], shape) * (Wt / W), upsample(z[1], shape) * (Ht / H)])
    out[:, 0, :] = out[:, -1, :] = 0.0
    out[:, :, 0] = out[:, :, -1] = 0.0
    return out
