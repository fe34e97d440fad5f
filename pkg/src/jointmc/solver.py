"""Joint reconstruction and registration by alternating minimization.

For each acquisition ``i`` the solver keeps a deformation ``phi_i = Id + z_i``,
the displacement-gradient proxy ``v_i``, the deformed-image proxy ``w_i`` and its
TV-denoised copy ``f_i``. One outer iteration runs the coupled ``(v, phi)``
inner loop, inverts ``phi_i``, updates ``w_i`` in closed form, denoises with the
weighted-TV prox and finally averages the registered ``w_i`` into ``u``. The
whole scheme runs coarse to fine over an image pyramid.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields as dc_fields

import numpy as np

from .deformation import (DeformationState, invert, jacobian_determinant, regrid_if_needed,
                          update_phi)
from .edges import WeightMap, weight_map_from_image
from .errors import InvalidParameter, JointMCError, StepDiverged
from .fields import (central_gradient, displacement_gradient, downsample, upsample,
                     upsample_displacement, warp)
from .fourier import adjoint, as_kspace_stack, forward
from .hyperelastic import OgdenParams, update_v, w_op
from .wtv import prox_wtv, tv_g

log = logging.getLogger(__name__)

TERMS = ("hyperelastic", "coupling", "fidelity", "matching", "tv")


@dataclass
class SolverConfig:
    # Table 1, Dataset I
    a1: float = 1.0
    a2: float = 50.0
    gamma1: float = 5.0
    gamma2: float = 1e5
    gamma3: float = 30.0
    theta: float = 5.0
    sigma: float = 2.0
    k_outer: int = 2
    N_inner: int = 500
    n_chambolle: int = 500
    # not fixed by the table
    pyramid_levels: int = 3
    dt_v: float = 1e-3
    dt_phi: float = 0.03
    delta_t: float = 0.125
    det_floor: float = 0.05
    g_floor: float = 0.01
    reference_index: int = 0
    init: str = "reference"
    invert_tol: float = 1e-3
    invert_max_iter: int = 50
    max_halvings: int = 3
    stability: float = 1.0
    intensity_scale: float = 0.04
    register: bool = True

    def __post_init__(self):
        for name in ("a1", "a2", "gamma1", "gamma3", "theta", "sigma", "dt_v", "dt_phi",
                     "det_floor", "g_floor", "invert_tol"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive, got {getattr(self, name)}")
        if self.gamma2 < 0:
            raise InvalidParameter(f"gamma2 must be >= 0, got {self.gamma2}")
        for name in ("k_outer", "N_inner", "n_chambolle", "pyramid_levels", "invert_max_iter"):
            if getattr(self, name) < 1:
                raise InvalidParameter(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 < self.delta_t <= 0.125:
            raise InvalidParameter(f"delta_t must lie in (0, 1/8], got {self.delta_t}")
        if not 0 < self.g_floor < 1:
            raise InvalidParameter(f"g_floor must lie in (0, 1), got {self.g_floor}")
        if self.init not in ("reference", "mean"):
            raise InvalidParameter(f"init must be 'reference' or 'mean', got {self.init!r}")

    @classmethod
    def dataset_ii(cls, **overrides):
        """Preset with the second parameter row (gamma3 = 15, sigma = 1.5)."""
        return cls(**{"gamma3": 15.0, "sigma": 1.5, **overrides})

    @property
    def ogden(self) -> OgdenParams:
        return OgdenParams(self.a1, self.a2)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in dc_fields(cls)]


@dataclass
class FrameState:
    """Per-acquisition unknowns."""

    deformation: DeformationState
    v: np.ndarray
    w: np.ndarray
    f: np.ndarray
    g: WeightMap
    z_inv: np.ndarray
    det_inv: np.ndarray
    dt_v: float
    dt_phi: float

    @property
    def z(self):
        """Total displacement including the maps saved at regrids."""
        return self.deformation.total()


@dataclass
class EnergyRecord:
    level: int
    iteration: int
    terms: dict
    total: float
    min_det: list
    regrids: list


@dataclass
class JointState:
    u: np.ndarray
    frames: list
    x: np.ndarray
    level: int = 0
    energy_log: list = field(default_factory=list)

    @property
    def T(self):
        return len(self.frames)

    def registered(self):
        """``w_i o phi_i`` for every frame."""
        return np.stack([warp(fr.w, fr.z) for fr in self.frames])


@dataclass
class SolverReport:
    energy_log: list
    regrid_counts: list
    min_det: list
    wall_clock: float
    level_shapes: list
    dt_halvings: int = 0
    inversion_errors: list = field(default_factory=list)
    descent_violations: list = field(default_factory=list)


# -- closed-form sub-problems -------------------------------------------------

def update_w(u, z_inv, det_inv, f, x, cfg: SolverConfig):
    """Pointwise minimizer of the matching, fidelity and prox-coupling terms in ``w``.

    With a unitary forward operator the data term reduces to
    ``|w - adjoint(x)|^2`` on real images, so the normal equations are diagonal.
    """
    inv_theta = 0.0 if np.isinf(cfg.theta) else 1.0 / cfg.theta
    warped = warp(u, z_inv)
    num = cfg.gamma2 * det_inv * warped + inv_theta * f + cfg.gamma3 * adjoint(x)
    return num / (cfg.gamma2 * det_inv + cfg.gamma3 + inv_theta)


def update_u(w_list, z_list):
    """Average of the registered proxies ``w_i o phi_i``."""
    acc = np.zeros_like(np.asarray(w_list[0], dtype=float))
    for w, z in zip(w_list, z_list):
        acc += warp(w, z)
    return acc / len(w_list)


def energy(state: JointState, cfg: SolverConfig) -> EnergyRecord:
    """Per-term decomposition of the decoupled objective, averaged over frames."""
    T = state.T
    terms = dict.fromkeys(TERMS, 0.0)
    eye = np.eye(2)[:, :, None, None]
    inv_theta = 0.0 if np.isinf(cfg.theta) else 1.0 / cfg.theta
    for fr, x in zip(state.frames, state.x):
        z = fr.deformation.z
        terms["hyperelastic"] += float(np.sum(w_op(eye + fr.v, cfg.ogden))) / T
        terms["coupling"] += 0.5 * cfg.gamma1 * float(np.sum((fr.v - displacement_gradient(z)) ** 2)) / T
        terms["fidelity"] += 0.5 * cfg.gamma3 * float(np.sum(np.abs(forward(fr.w) - x) ** 2)) / T
        resid = (fr.w - warp(state.u, fr.z_inv)) ** 2 * np.maximum(fr.det_inv, 0.0)
        terms["matching"] += 0.5 * cfg.gamma2 * float(np.sum(resid)) / T
        terms["tv"] += (0.5 * inv_theta * float(np.sum((fr.f - fr.w) ** 2)) + tv_g(fr.f, fr.g)) / T
    return EnergyRecord(
        level=state.level, iteration=0, terms=terms, total=float(sum(terms.values())),
        min_det=[float(jacobian_determinant(fr.z).min()) for fr in state.frames],
        regrids=[fr.deformation.regrid_count for fr in state.frames])


# -- driver -------------------------------------------------------------------

def pyramid(images, levels: int):
    """Image stacks from coarse to fine; never goes below 8 pixels per side."""
    stacks = [np.asarray(images, dtype=float)]
    for _ in range(levels - 1):
        if min(stacks[-1].shape[-2:]) < 16:
            break
        stacks.append(np.stack([downsample(im) for im in stacks[-1]]))
    return stacks[::-1]


def _inverse(z, cfg):
    z_inv, err = invert(z, cfg.invert_tol, cfg.invert_max_iter)
    det_inv = jacobian_determinant(z_inv)
    if det_inv.min() <= 0:
        log.warning("inverse deformation folds (min det %.3g); clamping", det_inv.min())
        det_inv = np.maximum(det_inv, cfg.det_floor)
    return z_inv, det_inv, err


def _weights(images, cfg, scale):
    sigma = max(cfg.sigma / scale, 0.5)
    return [weight_map_from_image(im, sigma, floor=cfg.g_floor) for im in images]


def initial_state(images, cfg: SolverConfig, initial_u=None, scale: float = 1.0) -> JointState:
    """Identity deformations, ``w_i = f_i = adjoint(x_i)`` and ``u`` from the
    reference frame or the plain mean."""
    images = np.asarray(images, dtype=float)
    x = np.stack([forward(im) for im in images])
    if initial_u is not None:
        u = np.asarray(initial_u, dtype=float)
        if u.shape != images.shape[1:]:
            u = upsample(u, images.shape[1:])
    elif cfg.init == "mean":
        u = images.mean(axis=0)
    else:
        u = images[cfg.reference_index].copy()
    shape = images.shape[1:]
    frames = []
    for im, g in zip(images, _weights(images, cfg, scale)):
        zero = np.zeros((2,) + shape)
        frames.append(FrameState(DeformationState.identity(shape), np.zeros((2, 2) + shape),
                                 im.copy(), im.copy(), g, zero, np.ones(shape), cfg.dt_v, cfg.dt_phi))
    return JointState(u=u, frames=frames, x=x)


def prolong(state: JointState, images, cfg: SolverConfig, scale: float, initial_u=None) -> JointState:
    """Start the next pyramid level from the coarse deformations.

    Only the registration variables ``z`` and ``v`` are carried over; ``u``,
    ``w`` and ``f`` restart from this level's data exactly as at the coarsest
    level. Prolonging them instead would freeze the blur of the coarse grid
    into ``u``, because with ``gamma2 >> gamma3`` each outer iteration moves
    ``u`` by only about ``gamma3 / gamma2`` of the remaining data misfit.
    """
    new = initial_state(images, cfg, initial_u, scale)
    new.level = state.level + 1
    new.energy_log = state.energy_log
    shape = new.u.shape
    for fr, old in zip(new.frames, state.frames):
        z = upsample_displacement(old.z, shape)
        fr.deformation = DeformationState(z, [], old.deformation.regrid_count)
        fr.v = displacement_gradient(z)
        fr.z_inv, fr.det_inv, _ = _inverse(z, cfg)
        fr.dt_v, fr.dt_phi = old.dt_v, old.dt_phi
    return new


def _halve(fr, which, cfg, counter, exc=None):
    new = getattr(fr, which) / 2
    if new < getattr(cfg, which) / 2 ** cfg.max_halvings:
        raise exc or StepDiverged(f"{which} exhausted {cfg.max_halvings} halvings")
    log.info("halving %s to %.3g", which, new)
    setattr(fr, which, new)
    counter[0] += 1


def _stable_dt(grad_w, cfg):
    """Largest step for which the explicit image force stays stable.

    The matching force linearizes to ``gamma2 grad w grad w^T``; the explicit
    Euler step is stable while ``dt * gamma2 * |grad w|^2 <= cfg.stability``.
    """
    stiff = cfg.gamma2 * float(np.max(np.sum(grad_w ** 2, axis=0)))
    return cfg.stability / stiff if stiff > 0 else np.inf


def register_frame(fr: FrameState, u, cfg: SolverConfig, counter):
    """The coupled ``(v, phi)`` inner loop with regridding, in place on ``fr``."""
    state = fr.deformation
    w_reg = warp(fr.w, state.saved_total()) if state.saved else fr.w
    grad_w = central_gradient(w_reg)
    dt_cap = _stable_dt(grad_w, cfg)
    v = fr.v
    it = 0
    while it < cfg.N_inner:
        try:
            v_new = update_v(v, state.z, cfg.ogden, cfg.gamma1, fr.dt_v)
        except StepDiverged as exc:
            _halve(fr, "dt_v", cfg, counter, exc)
            continue
        z_new = update_phi(state.z, v_new, w_reg, u, cfg.gamma1, cfg.gamma2,
                           min(fr.dt_phi, dt_cap), grad_w)
        if not np.all(np.isfinite(z_new)):
            _halve(fr, "dt_phi", cfg, counter)
            continue
        previous = state.z
        v = v_new
        state = DeformationState(z_new, state.saved, state.regrid_count)
        state, v, w_new, regridded = regrid_if_needed(state, v, w_reg, cfg.det_floor, previous)
        if regridded:
            log.info("regrid %d (min det fell below %.3g)", state.regrid_count, cfg.det_floor)
            w_reg = w_new
            grad_w = central_gradient(w_reg)
            dt_cap = _stable_dt(grad_w, cfg)
        it += 1
    fr.deformation = state
    fr.v = v


def outer_iteration(state: JointState, cfg: SolverConfig, counter, inversion_errors):
    for fr, x in zip(state.frames, state.x):
        if cfg.register:
            register_frame(fr, state.u, cfg, counter)
        fr.z_inv, fr.det_inv, err = _inverse(fr.z, cfg)
        inversion_errors.append(err)
        fr.w = update_w(state.u, fr.z_inv, fr.det_inv, fr.f, x, cfg)
        fr.f = prox_wtv(fr.w, fr.g.g, cfg.theta, cfg.n_chambolle, cfg.delta_t)
    state.u = update_u([fr.w for fr in state.frames], [fr.z for fr in state.frames])


def _record(state, cfg, iteration, violations, tol=0.005):
    rec = energy(state, cfg)
    rec.iteration = iteration
    prev = [r for r in state.energy_log if r.level == state.level]
    if prev and rec.total > prev[-1].total + tol * abs(prev[-1].total):
        msg = (f"energy increased at level {state.level} iteration {iteration}: "
               f"{prev[-1].total:.6g} -> {rec.total:.6g}; terms before {prev[-1].terms}, after {rec.terms}")
        log.warning(msg)
        violations.append(msg)
    state.energy_log.append(rec)
    return rec


def _rescale(state, factor):
    state.u = state.u * factor
    state.x = state.x * factor
    for fr in state.frames:
        fr.w = fr.w * factor
        fr.f = fr.f * factor
    return state


def solve(acquisitions, cfg: SolverConfig = None, initial_u=None):
    """Jointly reconstruct ``u`` and the per-frame deformations.

    ``acquisitions`` is a ``(T, H, W)`` complex k-space stack. Coarse pyramid
    levels are synthesized by box-filtering the adjoint images and transforming
    them back. Returns ``(state, report)``.
    """
    cfg = cfg or SolverConfig()
    x = as_kspace_stack(acquisitions)
    if not 0 <= cfg.reference_index < x.shape[0]:
        raise InvalidParameter(f"reference_index {cfg.reference_index} out of range for T={x.shape[0]}")
    start = time.perf_counter()
    images = np.stack([adjoint(xi) for xi in x])
    peak = float(np.max(np.abs(images[cfg.reference_index])))
    gain = cfg.intensity_scale / peak if peak > 0 else 1.0
    if initial_u is not None:
        initial_u = np.asarray(initial_u, dtype=float) * gain
    levels = pyramid(images * gain, cfg.pyramid_levels)
    counter = [0]
    inversion_errors = []
    violations = []
    state = None
    try:
        for lvl, images in enumerate(levels):
            scale = 2 ** (len(levels) - 1 - lvl)
            if state is None:
                state = initial_state(images, cfg, initial_u, scale)
            else:
                state = prolong(state, images, cfg, scale, initial_u)
            _record(state, cfg, 0, violations)
            for k in range(1, cfg.k_outer + 1):
                outer_iteration(state, cfg, counter, inversion_errors)
                rec = _record(state, cfg, k, violations)
                log.info("level %d (%dx%d) iteration %d: energy %.6g, min det %.3f",
                         lvl, images.shape[2], images.shape[1], k, rec.total, min(rec.min_det))
    except JointMCError as exc:
        # hand the log so far to the caller for post-mortem reporting
        exc.energy_log = state.energy_log if state is not None else []
        raise
    state = _rescale(state, 1.0 / gain)
    report = SolverReport(
        energy_log=state.energy_log,
        regrid_counts=[fr.deformation.regrid_count for fr in state.frames],
        min_det=[float(jacobian_determinant(fr.z).min()) for fr in state.frames],
        wall_clock=time.perf_counter() - start,
        level_shapes=[im.shape[1:] for im in levels],
        dt_halvings=counter[0],
        inversion_errors=inversion_errors,
        descent_violations=violations)
    return state, report


def euclidean_mean(acquisitions):
    """Uncorrected baseline: plain average of the adjoint images."""
    x = as_kspace_stack(acquisitions)
    return np.mean([adjoint(xi) for xi in x], axis=0)
