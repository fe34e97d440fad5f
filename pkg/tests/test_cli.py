import csv
import json

import numpy as np
import pytest

from jointmc import cli, io
from jointmc.deformation import jacobian_determinant
from jointmc.metrics import psnr
from jointmc.phantom import PhantomSpec
from jointmc.solver import SolverConfig

SMALL = """\
[phantom]
width = 32
height = 32
amplitude = 0.5
T = 3

[solver]
N = 40
n = 50
levels = 1
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(SMALL)
    return path


def run(*args):
    return cli.main([*map(str, args), "--quiet"])


def test_table_keys_parse_verbatim():
    text = "[solver]\na1 = 2\na2 = 40\ngamma1 = 4\ngamma2 = 1000\ngamma3 = 15\n" \
           "theta = 3\nsigma = 1.5\nk = 3\nN = 100\nn = 200\n"
    cfg = cli.parse_config(text)
    s = cfg.solver
    assert (s.a1, s.a2, s.gamma1, s.gamma2, s.gamma3) == (2.0, 40.0, 4.0, 1000.0, 15.0)
    assert (s.theta, s.sigma, s.k_outer, s.N_inner, s.n_chambolle) == (3.0, 1.5, 3, 100, 200)


def test_empty_config_gives_defaults():
    cfg = cli.parse_config("")
    assert cfg.solver == SolverConfig()
    assert cfg.phantom == PhantomSpec()


def test_echo_round_trip():
    cfg = cli.parse_config(SMALL + "gamma2 = 12345.5\ninit = mean\n")
    assert cli.config_from_echo(cli.config_echo(cfg)) == cfg


@pytest.mark.parametrize("text, needle", [
    ("[solver]\nbogus = 1\n", "bogus"),
    ("[solver]\n\nN = many\n", "run.ini:3"),
    ("[phantom]\nmode = spiral\n", "mode"),
    ("[other]\nx = 1\n", "other"),
    ("no section header\n", "section"),
])
def test_malformed_config_exit_2(tmp_path, capsys, text, needle):
    path = tmp_path / "run.ini"
    path.write_text(text)
    assert run("simulate", "--config", path, "--out", tmp_path / "o") == cli.EXIT_CONFIG
    assert needle in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert run("simulate", "--config", tmp_path / "nope.ini", "--out", tmp_path / "o") == 2


def test_simulate_outputs_and_seed_override(tmp_path, config):
    assert run("simulate", "--config", config, "--out", tmp_path / "a") == 0
    assert run("simulate", "--config", config, "--out", tmp_path / "b") == 0
    assert run("simulate", "--config", config, "--out", tmp_path / "c", "--seed-override", 9) == 0
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["kind"] == "simulate" and man["T"] == 3 and len(man["kspace"]) == 3
    assert man["config"]["phantom"]["width"] == "32"
    a = (tmp_path / "a" / man["kspace"][1]).read_bytes()
    assert a == (tmp_path / "b" / man["kspace"][1]).read_bytes()
    assert a != (tmp_path / "c" / man["kspace"][1]).read_bytes()
    assert json.loads((tmp_path / "c" / "manifest.json").read_text())["seed"] == 9
    assert io.read_pgm(tmp_path / "a" / "truth.pgm").shape == (32, 32)


def test_simulate_static_single_frame(tmp_path):
    path = tmp_path / "static.ini"
    path.write_text("[phantom]\nT = 1\namplitude = 0\n")
    assert run("simulate", "--config", path, "--out", tmp_path / "s") == 0
    assert len(json.loads((tmp_path / "s" / "manifest.json").read_text())["kspace"]) == 1


def test_phantom_invariant_violation_is_config_error(tmp_path):
    path = tmp_path / "big.ini"
    path.write_text("[phantom]\namplitude = 8\n")
    assert run("simulate", "--config", path, "--out", tmp_path / "s") == cli.EXIT_CONFIG
    path.write_text("[phantom]\namplitude = 8\nforce = true\n")
    assert run("simulate", "--config", path, "--out", tmp_path / "s") == 0


def test_reconstruct_evaluate_export(tmp_path, config):
    sim, rec = tmp_path / "sim", tmp_path / "rec"
    assert run("simulate", "--config", config, "--out", sim) == 0
    assert run("reconstruct", "--config", config, "--data", sim, "--out", rec) == 0
    man = json.loads((rec / "manifest.json").read_text())
    assert cli.config_from_echo(man["config"]) == cli.load_config(config)
    for i in range(3):
        z = io.read_displacement(rec / man["z"][i])
        assert jacobian_determinant(z).min() > 0
        assert io.read_pgm(rec / f"det_{i:03d}.pgm").shape == (32, 32)
        assert io.read_pgm(rec / f"grid_{i:03d}.pgm").max() == 255
    with open(rec / "energy.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "level", "hyperelastic", "coupling", "fidelity", "matching", "tv",
                       "total", "min_det_per_i", "regrids"]
    assert len(rows) == 1 + 3  # iterations 0, 1, 2 at one level
    assert len(rows[1][8].split(";")) == 3

    assert run("evaluate", "--data", rec, "--truth", sim, "--out", tmp_path / "ev") == 0
    with open(tmp_path / "ev" / "metrics.csv") as fh:
        metrics = list(csv.DictReader(fh))
    assert len(metrics) == 3
    assert float(metrics[0]["psnr_u"]) > 0

    out = tmp_path / "maps"
    assert run("export-maps", "--data", rec, "--out", out) == 0
    assert sorted(p.name for p in out.glob("diff_*.pgm")) == [f"diff_{i:03d}.pgm" for i in range(3)]
    assert (out / "g_000.pgm").exists()


def test_levels_flag(tmp_path, config):
    sim, rec = tmp_path / "sim", tmp_path / "rec"
    run("simulate", "--config", config, "--out", sim)
    assert run("reconstruct", "--config", config, "--data", sim, "--out", rec, "--levels", 2) == 0
    report = json.loads((rec / "report.json").read_text())
    assert report["level_shapes"] == [[16, 16], [32, 32]]
    assert run("reconstruct", "--config", config, "--data", sim, "--out", rec, "--levels", 0) == 2


def test_null_motion_reconstruction(tmp_path):
    path = tmp_path / "null.ini"
    path.write_text("[phantom]\nwidth = 32\nheight = 32\nT = 1\namplitude = 0\nnoise_sigma = 0\n"
                    "[solver]\nN = 40\nn = 50\nlevels = 1\n")
    run("simulate", "--config", path, "--out", tmp_path / "sim")
    assert run("reconstruct", "--config", path, "--data", tmp_path / "sim", "--out", tmp_path / "rec") == 0
    u = io.read_scalar(tmp_path / "rec" / "u.f64")
    truth = io.read_scalar(tmp_path / "sim" / "truth.f64")
    assert psnr(u, truth) >= 40


def test_truth_against_itself(tmp_path, config):
    sim = tmp_path / "sim"
    run("simulate", "--config", config, "--out", sim)
    assert run("evaluate", "--data", sim, "--truth", sim, "--out", tmp_path / "ev") == 0
    with open(tmp_path / "ev" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["psnr_u"] == "inf" and float(r["epe_mean"]) == 0 for r in rows)


def test_missing_data_file_exit_3(tmp_path, config, capsys):
    sim = tmp_path / "sim"
    run("simulate", "--config", config, "--out", sim)
    (sim / "kspace_001.f64").unlink()
    assert run("reconstruct", "--config", config, "--data", sim, "--out", tmp_path / "r") == cli.EXIT_DATA
    assert "kspace_001.f64" in capsys.readouterr().err
    assert run("reconstruct", "--data", tmp_path / "none", "--out", tmp_path / "r") == cli.EXIT_DATA


def test_grid_mismatch_exit_3(tmp_path, config):
    run("simulate", "--config", config, "--out", tmp_path / "a")
    other = tmp_path / "other.ini"
    other.write_text(SMALL.replace("width = 32\nheight = 32", "width = 16\nheight = 16")
                     .replace("amplitude = 0.5", "amplitude = 0.2"))
    run("simulate", "--config", other, "--out", tmp_path / "b")
    assert run("evaluate", "--data", tmp_path / "a", "--truth", tmp_path / "b",
               "--out", tmp_path / "e") == cli.EXIT_DATA


def test_solver_failure_exit_4(tmp_path, config, capsys):
    run("simulate", "--config", config, "--out", tmp_path / "sim")
    bad = tmp_path / "bad.ini"
    bad.write_text(SMALL + "dt_v = 10\n")
    assert run("reconstruct", "--config", bad, "--data", tmp_path / "sim", "--out", tmp_path / "r") == 4
    assert "StepDiverged" in capsys.readouterr().err
    assert (tmp_path / "r" / "energy.csv").exists()


def test_save_dataset_hook(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 16, 16)) + 1j * rng.standard_normal((2, 16, 16))
    cli.save_dataset(tmp_path / "d", x)
    man, root = cli.read_manifest(tmp_path / "d")
    np.testing.assert_array_equal(cli.load_kspace(man, root), x)
