"""Cartesian MRI forward operator and its adjoint.

Both directions use the unitary DFT (``norm="ortho"``), so the forward map is
an isometry and ``adjoint(forward(u)) == u`` for real images. The adjoint keeps
only the real part of the inverse transform since the reconstructions here
are real valued.
"""

import numpy as np
from scipy import fft

from .errors import InvalidParameter


def forward(u):
    """Unitary 2D DFT of a real image."""
    return fft.fft2(np.asarray(u, dtype=float), norm="ortho")


def adjoint(x):
    """Real part of the unitary inverse 2D DFT."""
    return fft.ifft2(np.asarray(x, dtype=complex), norm="ortho").real


def forward_stack(images):
    return np.stack([forward(u) for u in images])


def adjoint_stack(kspace):
    return np.stack([adjoint(x) for x in kspace])


def as_kspace_stack(acquisitions):
    """Validate a sequence of k-space acquisitions and return a ``(T, H, W)`` complex array."""
    x = np.asarray(acquisitions)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] < 1:
        raise InvalidParameter(f"expected a (T, H, W) k-space stack, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidParameter("k-space stack contains non-finite values")
    return x.astype(complex, copy=False)
