"""Command-line front end: simulate, reconstruct, evaluate and export-maps.

Every command communicates through files. A run directory holds float fields
in the binary formats of :mod:`jointmc.io`, 8-bit PGM previews and a
``manifest.json`` listing the files together with an echo of the
configuration that produced them.

Configuration files are INI-style with ``[phantom]`` and ``[solver]``
sections. Keys are case sensitive, so ``N`` (inner iterations) and ``n``
(weighted-TV iterations) are distinct.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .deformation import invert, jacobian_determinant
from .errors import GridMismatch, JointMCError
from .fields import Grid2D, sample, warp
from .fourier import adjoint
from .metrics import difference_map, endpoint_error, mutual_information, psnr
from .phantom import PhantomSpec, generate
from .solver import TERMS, SolverConfig, euclidean_mean, solve

log = logging.getLogger("jointmc")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

# config key -> SolverConfig field; the short names are the ones used in the
# parameter table of the method
SOLVER_KEYS = {
    "a1": "a1", "a2": "a2", "gamma1": "gamma1", "gamma2": "gamma2", "gamma3": "gamma3",
    "theta": "theta", "sigma": "sigma", "k": "k_outer", "N": "N_inner", "n": "n_chambolle",
    "levels": "pyramid_levels", "dt_v": "dt_v", "dt_phi": "dt_phi", "delta_t": "delta_t",
    "det_floor": "det_floor", "g_floor": "g_floor", "reference_index": "reference_index",
    "init": "init", "invert_tol": "invert_tol", "invert_max_iter": "invert_max_iter",
    "max_halvings": "max_halvings", "stability": "stability",
    "intensity_scale": "intensity_scale", "register": "register",
}
PHANTOM_KEYS = ("width", "height", "amplitude", "period", "mode", "noise_sigma", "T", "seed",
                "scale", "min_det", "taper", "direction_x", "direction_y", "force")

DET_RANGE = (0.0, 2.0)


class ConfigError(JointMCError):
    pass


class DataError(JointMCError):
    pass


@dataclass
class RunConfig:
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    force: bool = False


# -- config parsing -----------------------------------------------------------

def _parser():
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def _key_line(text, section, key):
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
        elif current == section and line.split("=", 1)[0].split(":", 1)[0].strip() == key:
            return lineno
    return None


def _where(source, text, section, key):
    line = _key_line(text, section, key) if text else None
    return f"{source}:{line}" if line else source


def _convert(raw: str, kind, where: str, section: str, key: str):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: [{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Build a :class:`RunConfig` from INI text; unknown keys are errors."""
    cp = _parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for section in cp.sections():
        if section not in ("phantom", "solver"):
            line = next((i for i, raw in enumerate(text.splitlines(), 1)
                         if raw.strip() == f"[{section}]"), None)
            raise ConfigError(f"{source}:{line}: unknown section [{section}]")

    solver_kw = {}
    defaults = SolverConfig()
    if cp.has_section("solver"):
        for key, raw in cp.items("solver"):
            where = _where(source, text, "solver", key)
            if key not in SOLVER_KEYS:
                raise ConfigError(f"{where}: unknown key '{key}' in [solver]")
            name = SOLVER_KEYS[key]
            kind = type(getattr(defaults, name))
            solver_kw[name] = _convert(raw, kind, where, "solver", key)
    try:
        solver = SolverConfig(**solver_kw)
    except JointMCError as exc:
        raise ConfigError(f"{source}: [solver] {exc}") from None

    ph = PhantomSpec()
    kw = {}
    grid = {"width": ph.grid.width, "height": ph.grid.height}
    direction = list(ph.direction)
    force = False
    if cp.has_section("phantom"):
        for key, raw in cp.items("phantom"):
            where = _where(source, text, "phantom", key)
            if key not in PHANTOM_KEYS:
                raise ConfigError(f"{where}: unknown key '{key}' in [phantom]")
            if key in ("width", "height"):
                grid[key] = _convert(raw, int, where, "phantom", key)
            elif key in ("direction_x", "direction_y"):
                direction[key == "direction_y"] = _convert(raw, float, where, "phantom", key)
            elif key == "force":
                force = _convert(raw, bool, where, "phantom", key)
            else:
                kind = type(getattr(ph, key))
                kw[key] = _convert(raw, kind, where, "phantom", key)
    try:
        phantom = PhantomSpec(grid=Grid2D(grid["width"], grid["height"]),
                              direction=tuple(direction), **kw)
    except JointMCError as exc:
        raise ConfigError(f"{source}: [phantom] {exc}") from None
    return RunConfig(phantom, solver, force)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def config_echo(cfg: RunConfig) -> dict:
    """Section -> key -> string value, using the config-file key names."""
    ph = cfg.phantom
    phantom = {
        "width": ph.grid.width, "height": ph.grid.height, "amplitude": ph.amplitude,
        "period": ph.period, "mode": ph.mode, "noise_sigma": ph.noise_sigma, "T": ph.T,
        "seed": ph.seed, "scale": ph.scale, "min_det": ph.min_det, "taper": ph.taper,
        "direction_x": ph.direction[0], "direction_y": ph.direction[1], "force": cfg.force,
    }
    solver = {key: getattr(cfg.solver, name) for key, name in SOLVER_KEYS.items()}
    return {sec: {k: repr(v) if isinstance(v, float) else str(v) for k, v in d.items()}
            for sec, d in (("phantom", phantom), ("solver", solver))}


def echo_to_text(echo: dict) -> str:
    cp = _parser()
    cp.read_dict(echo)
    lines = []
    for section in cp.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in cp.items(section))
        lines.append("")
    return "\n".join(lines)


def config_from_echo(echo: dict) -> RunConfig:
    return parse_config(echo_to_text(echo), "<manifest echo>")


# -- manifests ----------------------------------------------------------------

def write_manifest(out: Path, manifest: dict) -> Path:
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed manifest ({exc})") from None
    if "kind" not in manifest:
        raise DataError(f"{path}: manifest has no 'kind' entry")
    return manifest, path.parent


def _load(root: Path, rel: str, reader):
    path = root / rel
    try:
        return reader(path)
    except FileNotFoundError:
        raise DataError(f"missing data file {path}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None


def load_kspace(manifest: dict, root: Path) -> np.ndarray:
    files = manifest.get("kspace")
    if not files:
        raise DataError(f"{root}: manifest lists no k-space files")
    stack = [_load(root, f, io.read_kspace) for f in files]
    shapes = {x.shape for x in stack}
    if len(shapes) != 1:
        raise DataError(f"{root}: k-space frames have different sizes {sorted(shapes)}")
    return np.stack(stack)


def save_dataset(out, kspace, extra: dict | None = None) -> Path:
    """Write a k-space stack plus a minimal manifest that ``reconstruct`` accepts.

    This is the import hook for measured data: reconstruct any ``(T, H, W)``
    complex array by saving it here first.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, x in enumerate(np.asarray(kspace)):
        names.append(f"kspace_{i:03d}.f64")
        io.write_kspace(out / names[-1], x)
    manifest = {"kind": "data", "T": len(names), "width": int(kspace.shape[2]),
                "height": int(kspace.shape[1]), "kspace": names}
    manifest.update(extra or {})
    return write_manifest(out, manifest)


# -- image exports ------------------------------------------------------------

def det_to_uint8(det):
    """Fixed normalization: det 0 maps to black, det 2 to white, identity to mid grey."""
    return io.to_uint8(det, *DET_RANGE)


def grid_overlay(z, spacing: int = 4, oversample: int = 4):
    """Image of the deformed grid ``x + z(x)``, lines every ``spacing`` pixels."""
    z = np.asarray(z, dtype=float)
    H, W = z.shape[1:]
    img = np.zeros((H, W), dtype=np.uint8)
    ts_x = np.arange(0, (W - 1) * oversample + 1) / oversample
    ts_y = np.arange(0, (H - 1) * oversample + 1) / oversample
    pts = []
    for r in range(0, H, spacing):
        pts.append((ts_x, np.full_like(ts_x, r)))
    for c in range(0, W, spacing):
        pts.append((np.full_like(ts_y, c), ts_y))
    for cx, cy in pts:
        px = cx + sample(z[0], cx, cy)
        py = cy + sample(z[1], cx, cy)
        ix, iy = np.round(px).astype(int), np.round(py).astype(int)
        ok = (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
        img[iy[ok], ix[ok]] = 255
    return img


def write_energy_csv(path, energy_log):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["iter", "level", *TERMS, "total", "min_det_per_i", "regrids"])
        for rec in energy_log:
            wr.writerow([rec.iteration, rec.level, *(format(rec.terms[t], ".17g") for t in TERMS),
                         format(rec.total, ".17g"),
                         ";".join(format(d, ".17g") for d in rec.min_det),
                         ";".join(str(r) for r in rec.regrids)])
    return path


# -- commands -----------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    truth, z_true, kspace = generate(cfg.phantom, force=cfg.force)
    io.write_scalar(out / "truth.f64", truth)
    io.write_pgm(out / "truth.pgm", truth)
    z_names = []
    for i, z in enumerate(z_true):
        z_names.append(f"z_true_{i:03d}.f64")
        io.write_displacement(out / z_names[-1], z)
        io.write_pgm(out / f"det_true_{i:03d}.pgm", det_to_uint8(jacobian_determinant(z)))
    extra = {"kind": "simulate", "seed": cfg.phantom.seed, "truth": "truth.f64",
             "z_true": z_names, "config": config_echo(cfg)}
    path = save_dataset(out, kspace, extra)
    log.info("simulated %d frames of %dx%d into %s", len(z_true), truth.shape[1], truth.shape[0], out)
    return path


def cmd_reconstruct(cfg: RunConfig, data, out: Path) -> Path:
    manifest, root = read_manifest(data)
    x = load_kspace(manifest, root)
    out.mkdir(parents=True, exist_ok=True)
    mean = euclidean_mean(x)
    io.write_scalar(out / "mean.f64", mean)
    io.write_pgm(out / "mean.pgm", mean)
    try:
        state, report = solve(x, cfg.solver)
    except JointMCError as exc:
        partial = getattr(exc, "energy_log", None)
        if partial:
            write_energy_csv(out / "energy.csv", partial)
        raise
    u = state.u
    lo, hi = float(min(u.min(), mean.min())), float(max(u.max(), mean.max()))
    io.write_scalar(out / "u.f64", u)
    io.write_pgm(out / "u.pgm", io.to_uint8(u, lo, hi))
    io.write_pgm(out / "mean_shared_scale.pgm", io.to_uint8(mean, lo, hi))
    files = {"z": [], "z_inv": [], "registered": [], "g": []}
    registered = state.registered()
    for i, fr in enumerate(state.frames):
        for key, arr, writer in (("z", fr.z, io.write_displacement),
                                 ("z_inv", fr.z_inv, io.write_displacement),
                                 ("registered", registered[i], io.write_scalar),
                                 ("g", fr.g.g, io.write_scalar)):
            files[key].append(f"{key}_{i:03d}.f64")
            writer(out / files[key][-1], arr)
    write_energy_csv(out / "energy.csv", report.energy_log)
    export_maps(out, u, [fr.z for fr in state.frames], registered, [fr.g.g for fr in state.frames])
    summary = {
        "regrid_counts": report.regrid_counts,
        "min_det": report.min_det,
        "wall_clock_s": report.wall_clock,
        "level_shapes": [list(s) for s in report.level_shapes],
        "dt_halvings": report.dt_halvings,
        "max_inversion_error": max(report.inversion_errors, default=0.0),
        "descent_violations": report.descent_violations,
    }
    (out / "report.json").write_text(json.dumps(summary, indent=2) + "\n")
    result = {"kind": "reconstruct", "T": len(state.frames), "width": int(u.shape[1]),
              "height": int(u.shape[0]), "u": "u.f64", "mean": "mean.f64", "energy": "energy.csv",
              "report": "report.json", "data": str(Path(data).resolve()), **files,
              "config": config_echo(cfg)}
    if "seed" in manifest:
        result["seed"] = manifest["seed"]
    log.info("reconstructed %d frames; min det %.3f; regrids %s", len(state.frames),
             min(report.min_det), report.regrid_counts)
    return write_manifest(out, result)


def export_maps(out: Path, u, zs, registered, gs=None):
    """Determinant maps, grid overlays, difference maps and weight maps as PGM."""
    out.mkdir(parents=True, exist_ok=True)
    for i, z in enumerate(zs):
        io.write_pgm(out / f"det_{i:03d}.pgm", det_to_uint8(jacobian_determinant(z)))
        io.write_pgm(out / f"grid_{i:03d}.pgm", grid_overlay(z))
        io.write_pgm(out / f"diff_{i:03d}.pgm", io.to_uint8_symmetric(difference_map(u, registered[i])))
    for i, g in enumerate(gs or []):
        io.write_pgm(out / f"g_{i:03d}.pgm", io.to_uint8(g, 0.0, 1.0))


def cmd_export_maps(data, out: Path) -> Path:
    manifest, root = read_manifest(data)
    if manifest["kind"] != "reconstruct":
        raise DataError(f"export-maps needs a reconstruct manifest, got '{manifest['kind']}'")
    u = _load(root, manifest["u"], io.read_scalar)
    zs = [_load(root, f, io.read_displacement) for f in manifest["z"]]
    reg = [_load(root, f, io.read_scalar) for f in manifest["registered"]]
    gs = [_load(root, f, io.read_scalar) for f in manifest.get("g", [])]
    export_maps(out, u, zs, reg, gs)
    return out


def _frames_for_evaluation(manifest, root):
    """``(u, displacements to compare, registered frames)`` from either manifest kind."""
    if manifest["kind"] == "reconstruct":
        u = _load(root, manifest["u"], io.read_scalar)
        z = [_load(root, f, io.read_displacement) for f in manifest["z_inv"]]
        reg = [_load(root, f, io.read_scalar) for f in manifest["registered"]]
        return u, z, reg
    if manifest["kind"] == "simulate":
        u = _load(root, manifest["truth"], io.read_scalar)
        z = [_load(root, f, io.read_displacement) for f in manifest["z_true"]]
        x = load_kspace(manifest, root)
        reg = [warp(adjoint(xi), invert(zi)[0]) for xi, zi in zip(x, z)]
        return u, z, reg
    raise DataError(f"cannot evaluate a '{manifest['kind']}' manifest")


def interior_margin(truth_manifest) -> int:
    """Pixels excluded from endpoint errors: the width of the motion taper."""
    echo = truth_manifest.get("config", {}).get("phantom", {})
    taper = float(echo.get("taper", PhantomSpec.taper))
    n = min(int(truth_manifest["width"]), int(truth_manifest["height"]))
    return math.ceil(taper * (n - 1))


def cmd_evaluate(data, truth, out: Path) -> Path:
    rec_manifest, rec_root = read_manifest(data)
    tru_manifest, tru_root = read_manifest(truth)
    if tru_manifest["kind"] != "simulate":
        raise DataError("evaluate needs a simulate manifest as ground truth")
    for key in ("width", "height", "T"):
        if rec_manifest.get(key) != tru_manifest.get(key):
            raise GridMismatch(f"{key} differs between manifests: "
                               f"{rec_manifest.get(key)} vs {tru_manifest.get(key)}")
    u, z_est, registered = _frames_for_evaluation(rec_manifest, rec_root)
    t_root = tru_root
    truth_img = _load(t_root, tru_manifest["truth"], io.read_scalar)
    z_true = [_load(t_root, f, io.read_displacement) for f in tru_manifest["z_true"]]
    x = load_kspace(tru_manifest, t_root)
    images = [adjoint(xi) for xi in x]
    mean = np.mean(images, axis=0)
    ref = int(rec_manifest.get("config", {}).get("solver", {}).get("reference_index", 0))
    peak = float(np.max(np.abs(truth_img))) or 1.0
    p_u, p_mean = psnr(u, truth_img, peak), psnr(mean, truth_img, peak)
    margin = interior_margin(tru_manifest)
    regrids = [0] * len(z_true)
    if rec_manifest["kind"] == "reconstruct":
        report = json.loads((rec_root / rec_manifest["report"]).read_text())
        regrids = report["regrid_counts"]
    out.mkdir(parents=True, exist_ok=True)
    path = out / "metrics.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["frame", "psnr_u", "psnr_mean", "mi_initial", "mi_registered",
                     "epe_mean", "epe_max", "regrids"])
        for i in range(len(z_true)):
            mi0 = mutual_information(images[ref], images[i])
            mi1 = mutual_information(u, registered[i])
            e_mean, e_max = endpoint_error(z_est[i], z_true[i], margin)
            wr.writerow([i, format(p_u, ".17g"), format(p_mean, ".17g"), format(mi0, ".17g"),
                         format(mi1, ".17g"), format(e_mean, ".17g"), format(e_max, ".17g"),
                         regrids[i]])
    log.info("PSNR corrected %.2f dB, uncorrected mean %.2f dB", p_u, p_mean)
    return path


# -- entry point --------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="jointmc", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=False, config=True):
        if config:
            p.add_argument("--config", help="INI file with [phantom] and [solver] sections")
        if data:
            p.add_argument("--data", required=True, help="manifest.json (or its directory)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--quiet", action="store_true", help="only report errors")

    p = sub.add_parser("simulate", help="generate a phantom dataset")
    common(p)
    p.add_argument("--seed-override", type=int, help="replace the phantom seed")
    p = sub.add_parser("reconstruct", help="joint motion-corrected reconstruction")
    common(p, data=True)
    p.add_argument("--levels", type=int, help="number of pyramid levels")
    p = sub.add_parser("evaluate", help="compare a reconstruction with phantom ground truth")
    common(p, data=True, config=False)
    p.add_argument("--truth", required=True, help="manifest of the simulated dataset")
    p = sub.add_parser("export-maps", help="re-export PGM maps of a reconstruction")
    common(p, data=True, config=False)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", force=True)
    out = Path(args.out)
    try:
        cfg = load_config(getattr(args, "config", None))
        if getattr(args, "seed_override", None) is not None:
            cfg = replace(cfg, phantom=replace(cfg.phantom, seed=args.seed_override))
        if getattr(args, "levels", None) is not None:
            try:
                cfg = replace(cfg, solver=replace(cfg.solver, pyramid_levels=args.levels))
            except JointMCError as exc:
                raise ConfigError(f"--levels: {exc}") from None
        if args.command == "simulate":
            try:
                result = cmd_simulate(cfg, out)
            except JointMCError as exc:
                if isinstance(exc, DataError):
                    raise
                raise ConfigError(f"phantom rejected: {exc}") from None
        elif args.command == "reconstruct":
            result = cmd_reconstruct(cfg, args.data, out)
        elif args.command == "evaluate":
            result = cmd_evaluate(args.data, args.truth, out)
        else:
            result = cmd_export_maps(args.data, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GridMismatch) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except JointMCError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if not args.quiet:
        print(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
