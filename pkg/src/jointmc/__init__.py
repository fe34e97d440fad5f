"""Joint motion-corrected MR reconstruction with hyperelastic registration."""

from .errors import (DegenerateInput, GridMismatch, InvalidParameter, InvariantViolation,
                     InversionFailed, JointMCError, LinearSolveFailed, StepDiverged)
from .fields import Grid2D, warp
from .fourier import adjoint, forward
from .phantom import PhantomSpec, generate
from .solver import SolverConfig, euclidean_mean, solve

__all__ = [
    "DegenerateInput", "GridMismatch", "InvalidParameter", "InvariantViolation", "InversionFailed",
    "JointMCError", "LinearSolveFailed", "StepDiverged", "Grid2D", "warp", "adjoint", "forward",
    "PhantomSpec", "generate", "SolverConfig", "euclidean_mean", "solve",
]
