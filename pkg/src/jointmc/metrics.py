"""Image and registration quality measures."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInput, GridMismatch, InvalidParameter


def _check_pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise GridMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def ssd(a, b):
    a, b = _check_pair(a, b)
    return float(np.sum((a - b) ** 2))


def psnr(a, b, peak: float = 1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a, b = _check_pair(a, b)
    if not peak > 0:
        raise InvalidParameter(f"peak must be positive, got {peak}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak ** 2 / mse)


def _bin_indices(a, bins):
    lo, hi = float(a.min()), float(a.max())
    if not hi > lo:
        raise DegenerateInput("constant image has no intensity range to bin")
    idx = np.floor((a - lo) / (hi - lo) * bins).astype(np.intp)
    return np.clip(idx, 0, bins - 1).ravel()


def joint_histogram(a, b, bins: int = 32):
    a, b = _check_pair(a, b)
    if bins < 2:
        raise InvalidParameter(f"bins must be >= 2, got {bins}")
    ia, ib = _bin_indices(a, bins), _bin_indices(b, bins)
    return np.bincount(ia * bins + ib, minlength=bins * bins).reshape(bins, bins)


def entropy(a, bins: int = 32):
    """Shannon entropy (nats) of the min-max binned intensities."""
    a = np.asarray(a, dtype=float)
    if bins < 2:
        raise InvalidParameter(f"bins must be >= 2, got {bins}")
    p = np.bincount(_bin_indices(a, bins), minlength=bins) / a.size
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def mutual_information(a, b, bins: int = 32):
    """Histogram mutual information in nats, per-image min-max binning."""
    pxy = joint_histogram(a, b, bins) / np.size(a)
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    return float(np.sum(pxy[nz] * np.log(pxy[nz] / np.outer(px, py)[nz])))


def endpoint_error(z_est, z_true, interior_margin: int = 0):
    """Mean and max Euclidean displacement error over the interior, in pixels."""
    z_est, z_true = _check_pair(z_est, z_true)
    m = int(interior_margin)
    H, W = z_est.shape[-2:]
    if 2 * m >= min(H, W):
        raise InvalidParameter(f"margin {m} leaves no interior on a {W}x{H} grid")
    d = z_est - z_true
    e = np.hypot(d[0], d[1])[m:H - m, m:W - m]
    return float(e.mean()), float(e.max())


def difference_map(u, registered):
    """Signed difference ``u - registered``."""
    u, registered = _check_pair(u, registered)
    return u - registered
