"""Synthetic ground truth: ellipse phantom, breathing-like motion and noisy k-space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .deformation import jacobian_determinant
from .errors import InvalidParameter, InvariantViolation
from .fields import Grid2D, warp
from .fourier import forward

# (centre x, centre y, semi-axis x, semi-axis y, angle in degrees, intensity),
# centre and axes in units of the half field of view. A shrunken modified
# Shepp-Logan head so the image vanishes well inside the border.
SHEPP_LOGAN = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, 0.0184, 0.6624, 0.874, 0.0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    (0.0, -0.35, 0.21, 0.25, 0.0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    (-0.08, 0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, 0.605, 0.023, 0.023, 0.0, 0.1),
    (0.06, 0.605, 0.023, 0.046, 0.0, 0.1),
)

MODES = ("translation", "sinusoidal-compression")


@dataclass(frozen=True)
class PhantomSpec:
    grid: Grid2D = Grid2D(64, 64)
    ellipses: tuple = SHEPP_LOGAN
    amplitude: float = 2.0
    period: int = 6
    mode: str = "translation"
    noise_sigma: float = 0.02
    T: int = 6
    seed: int = 0
    scale: float = 0.8
    min_det: float = 0.2
    taper: float = 0.1
    direction: tuple = field(default=(0.0, 1.0))

    def __post_init__(self):
        if self.amplitude < 0:
            raise InvalidParameter(f"amplitude must be >= 0, got {self.amplitude}")
        if self.noise_sigma < 0:
            raise InvalidParameter(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.T < 1:
            raise InvalidParameter(f"T must be >= 1, got {self.T}")
        if self.period < 1:
            raise InvalidParameter(f"period must be >= 1, got {self.period}")
        if self.mode not in MODES:
            raise InvalidParameter(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.taper < 0.5:
            raise InvalidParameter(f"taper must lie in (0, 0.5), got {self.taper}")


def ellipse_image(grid: Grid2D, ellipses=SHEPP_LOGAN, scale: float = 0.8, supersample: int = 4):
    """Rasterize superposed ellipses with ``supersample``^2 samples per pixel."""
    H, W = grid.shape
    s = supersample
    off = (np.arange(s) + 0.5) / s - 0.5
    ys = ((np.arange(H)[:, None] + off[None, :]).ravel() - (H - 1) / 2) / (H / 2) / scale
    xs = ((np.arange(W)[:, None] + off[None, :]).ravel() - (W - 1) / 2) / (W / 2) / scale
    # image y axis points down; flip so the ellipse table reads like the usual head
    Y, X = np.meshgrid(-ys, xs, indexing="ij")
    img = np.zeros_like(X)
    for cx, cy, ax, ay, ang, val in ellipses:
        t = np.deg2rad(ang)
        dx, dy = X - cx, Y - cy
        xr = dx * np.cos(t) + dy * np.sin(t)
        yr = -dx * np.sin(t) + dy * np.cos(t)
        img[(xr / ax) ** 2 + (yr / ay) ** 2 <= 1.0] += val
    return img.reshape(H, s, W, s).mean(axis=(1, 3))


def smoothstep_window(n: int, taper: float = 0.1):
    """1D window rising from 0 at both ends to 1 over a ``taper * (n-1)`` margin."""
    t = np.arange(n, dtype=float)
    d = np.minimum(t, n - 1 - t) / (taper * (n - 1))
    d = np.clip(d, 0.0, 1.0)
    return d * d * (3.0 - 2.0 * d)


def motion_profile(spec: PhantomSpec):
    """Unit-amplitude displacement pattern, zero on the border."""
    H, W = spec.grid.shape
    wy = smoothstep_window(H, spec.taper)
    wx = smoothstep_window(W, spec.taper)
    win = wy[:, None] * wx[None, :]
    if spec.mode == "translation":
        d = np.asarray(spec.direction, dtype=float)
        d = d / np.linalg.norm(d)
        return np.stack([d[0] * win, d[1] * win])
    # vertical squash towards the centre row, strongest near the top and bottom
    y = (np.arange(H, dtype=float) - (H - 1) / 2) / ((H - 1) / 2)
    return np.stack([np.zeros((H, W)), -y[:, None] * win])


def frame_displacements(spec: PhantomSpec):
    prof = motion_profile(spec)
    return np.stack([spec.amplitude * np.sin(2 * np.pi * i / spec.period) * prof
                     for i in range(spec.T)])


def generate(spec: PhantomSpec = PhantomSpec(), force: bool = False):
    """Build ``(truth, z_true, kspace)`` for a phantom experiment.

    ``z_true[i]`` is the displacement with which frame ``i`` samples the truth:
    ``adjoint(kspace[i]) = truth o (Id + z_true[i]) + noise``. The Jacobian check
    against ``spec.min_det`` can be skipped with ``force=True``, for stress
    tests with deliberately excessive motion.
    """
    truth = ellipse_image(spec.grid, spec.ellipses, spec.scale)
    z_true = frame_displacements(spec)
    if not force:
        for i, z in enumerate(z_true):
            dmin = float(jacobian_determinant(z).min())
            if dmin <= spec.min_det:
                raise InvariantViolation(
                    f"frame {i}: min det(I + grad z) = {dmin:.3f} <= {spec.min_det}; reduce the amplitude")
    rng = np.random.default_rng(spec.seed)
    H, W = spec.grid.shape
    kspace = np.empty((spec.T, H, W), dtype=complex)
    for i, z in enumerate(z_true):
        kspace[i] = forward(warp(truth, z))
        if spec.noise_sigma > 0:
            kspace[i] += spec.noise_sigma * (rng.standard_normal((H, W)) + 1j * rng.standard_normal((H, W)))
    return truth, z_true, kspace
