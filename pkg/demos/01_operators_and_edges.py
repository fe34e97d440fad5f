"""Measurement model and edge weights.

A single-coil, fully sampled acquisition is the unitary 2D FFT of the image.
The adjoint takes us back to image space, and the edge-stopping weights used
by the weighted TV are computed from those adjoint images.

    python demos/01_operators_and_edges.py
"""

import numpy as np

from jointmc.edges import weight_map
from jointmc.fourier import adjoint, forward
from jointmc.phantom import PhantomSpec, generate

truth, z_true, x = generate(PhantomSpec())
print(f"{x.shape[0]} acquisitions of {x.shape[2]}x{x.shape[1]} k-space samples")

# unitary: energy is preserved and the adjoint inverts the forward map
u = truth
print("energy ratio |Au| / |u|:", np.linalg.norm(forward(u)) / np.linalg.norm(u))
print("round-trip error:", np.max(np.abs(adjoint(forward(u)) - u)))

# the adjoint images are the motion-displaced frames plus noise
for i, xi in enumerate(x):
    img = adjoint(xi)
    print(f"frame {i}: true shift {z_true[i][1, 32, 32]:+.2f} px, "
          f"rms difference to truth {np.sqrt(np.mean((img - truth) ** 2)):.4f}")

# g is near 1 in flat regions and drops towards the floor on edges
wm = weight_map(x[0], sigma=2.0)
print(f"weight map: lambda = {wm.lam:.4f}, g in [{wm.g.min():.3f}, {wm.g.max():.3f}], "
      f"{np.mean(wm.g < 0.5):.0%} of pixels below 0.5")
