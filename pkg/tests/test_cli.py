import subprocess
import sys

import numpy as np
import pytest

from hjpdhg.cli import TRAJ_DEFAULTS, main, resolve_config
from hjpdhg.core import TAU_BUDGET, PdhgConfig
from hjpdhg.grid_eval import CONTOUR_HEADER, SCALING_HEADER, read_field_csv, write_field_csv

QUAD_TARGET = "0.36,-0.62,-0.06,0.23,0.85,-0.66,0.72,-0.45,0.15,-0.75,0.04,-0.83"


def parse(out):
    return dict(line.split(" ", 1) for line in out.strip().splitlines())


class TestSolve:
    def test_reports_value(self, capsys):
        assert main(["solve", "--problem", "eikonal+", "--point", "0,0", "--time", "0.2"]) == 0
        rep = parse(capsys.readouterr().out)
        assert float(rep["fval"]) == pytest.approx(-0.5, abs=1e-2)
        assert rep["stop_reason"] == "tol" and rep["converged"] == "true"

    def test_negative_coordinates(self, capsys):
        assert main(["solve", "--problem", "eikonal+", "--point", "-2.5,0", "--time", "0.1"]) == 0
        assert float(parse(capsys.readouterr().out)["fval"]) < 0.1

    def test_dimension_mismatch(self, capsys):
        assert main(["solve", "--problem", "eikonal+", "--point", "0,0,0", "--time", "0.2"]) == 1
        assert "dimension" in capsys.readouterr().err

    def test_unknown_problem(self, capsys):
        assert main(["solve", "--problem", "nope", "--point", "0", "--time", "0.2"]) == 1

    def test_bad_numbers(self):
        assert main(["solve", "--problem", "eikonal+", "--point", "0,a", "--time", "0.2"]) == 1

    def test_missing_flag(self):
        assert main(["solve", "--problem", "eikonal+", "--time", "0.2"]) == 1

    def test_strict_non_convergence(self, capsys):
        argv = ["solve", "--problem", "eikonal+", "--point", "0,0", "--time", "0.2", "--max-count", "1"]
        assert main(argv) == 0
        assert main(argv + ["--strict"]) == 2
        assert "max-count" in capsys.readouterr().out

    def test_step_product_guard(self, capsys):
        argv = ["solve", "--problem", "eikonal+", "--point", "0,0", "--time", "0.2", "--sigma", "1", "--tau", "0.25"]
        assert main(argv) == 1

    def test_game_point(self, capsys):
        assert main(["solve", "--problem", "diffnorms2", "--point", "0,0", "--time", "0.04"]) == 0
        assert float(parse(capsys.readouterr().out)["fval"]) == pytest.approx(-0.5, abs=2e-2)


class TestConfig:
    def test_precedence(self):
        base = PdhgConfig(sigma=50.0, tau=TAU_BUDGET / 50.0, delta=0.02, seed=0)
        cfg, explicit = resolve_config(base, {"sigma": 10.0, "seed": 3, "delta": 0.01}, {"seed": 7, "sigma": None})
        assert explicit and cfg.sigma == 10.0 and cfg.tau == pytest.approx(TAU_BUDGET / 10.0)
        assert cfg.seed == 7 and cfg.delta == 0.01

    def test_tau_given_with_sigma(self):
        base = PdhgConfig(sigma=50.0, tau=TAU_BUDGET / 50.0)
        cfg, _ = resolve_config(base, {"sigma": 10.0, "tau": 0.01}, {})
        assert cfg.tau == 0.01

    def test_registry_defaults_untouched(self):
        base = PdhgConfig(sigma=50.0, tau=TAU_BUDGET / 50.0)
        cfg, explicit = resolve_config(base, {}, {"seed": None})
        assert cfg == base and not explicit

    def test_file_and_flag_end_to_end(self, tmp_path, capsys):
        conf = tmp_path / "c.yaml"
        conf.write_text("max_count: 1\nseed: 4\n")
        argv = ["solve", "--problem", "eikonal+", "--point", "0,0", "--time", "0.2", "--config", str(conf)]
        assert main(argv) == 0
        assert parse(capsys.readouterr().out)["iterations"] == "1"
        assert main(argv + ["--max-count", "100000"]) == 0
        assert parse(capsys.readouterr().out)["stop_reason"] == "tol"

    @pytest.mark.parametrize("text", ["bogus: 1\n", "- 1\n- 2\n", "sigma: [1, 2]\n", "a: [\n"])
    def test_bad_files(self, tmp_path, text):
        conf = tmp_path / "c.yaml"
        conf.write_text(text)
        argv = ["solve", "--problem", "eikonal+", "--point", "0,0", "--time", "0.2", "--config", str(conf)]
        assert main(argv) == 1

    def test_missing_file(self, tmp_path):
        argv = ["solve", "--problem", "eikonal+", "--point", "0,0", "--time", "0.2",
                "--config", str(tmp_path / "none.yaml")]
        assert main(argv) == 1


class TestFiles:
    GRID = ["grid", "--problem", "eikonal+", "--times", "0.1,0.2", "--range", "-3,3", "--mesh", "1"]

    def test_grid_and_contour(self, tmp_path, capsys):
        f = tmp_path / "f.csv"
        assert main(self.GRID + ["--out", str(f)]) == 0
        ts, av, bv, vals = read_field_csv(f)
        assert vals.shape == (2, 7, 7) and np.isfinite(vals).all()
        c = tmp_path / "c.csv"
        assert main(["contour", "--in", str(f), "--out", str(c)]) == 0
        lines = c.read_text().splitlines()
        assert lines[0] == ",".join(CONTOUR_HEADER) and len(lines) > 1

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(self.GRID + ["--out", str(a)]) == 0
        assert main(self.GRID + ["--out", str(b), "--threads", "4"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_contour_all_positive(self, tmp_path):
        f, c = tmp_path / "f.csv", tmp_path / "c.csv"
        write_field_csv(f, [0.1], [0.0, 1.0], [0.0, 1.0], np.ones((1, 2, 2)))
        assert main(["contour", "--level", "0", "--in", str(f), "--out", str(c)]) == 0
        assert c.read_text() == ",".join(CONTOUR_HEADER) + "\n"

    def test_unwritable_path(self, tmp_path):
        out = tmp_path / "missing" / "f.csv"
        assert main(self.GRID + ["--out", str(out)]) == 1

    def test_scale(self, tmp_path, capsys):
        s = tmp_path / "s.csv"
        assert main(["scale", "--problem", "eikonal-", "--dims", "2,4,8", "--time", "0.1",
                     "--repeats", "1", "--out", str(s)]) == 0
        lines = s.read_text().splitlines()
        assert lines[0] == ",".join(SCALING_HEADER) and len(lines) == 4

    def test_scale_fixed_dimension(self, tmp_path):
        assert main(["scale", "--problem", "quadcopter", "--dims", "2,4", "--out", str(tmp_path / "s.csv")]) == 1

    def test_lf_with_diff(self, tmp_path, capsys):
        f, r = tmp_path / "f.csv", tmp_path / "r.csv"
        assert main(self.GRID + ["--out", str(f)]) == 0
        capsys.readouterr()
        assert main(["lf", "--problem", "eikonal+", "--times", "0.1,0.2", "--range", "-3,3", "--mesh", "0.05",
                     "--diff", str(f), "--out", str(r)]) == 0
        out = capsys.readouterr().out.splitlines()
        rows = [ln.split() for ln in out if ln.startswith("t ")]
        assert len(rows) == 2
        assert all(float(row[3]) < 0.05 and float(row[5]) < 0.25 for row in rows)

    def test_lf_needs_2d(self, tmp_path):
        assert main(["lf", "--problem", "eikonal+", "--dim", "3", "--times", "0.1",
                     "--out", str(tmp_path / "r.csv")]) == 1


def test_quadcopter_trajectory_rows(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["traj", "--problem", "quadcopter", "--target", QUAD_TARGET, "--time", "6", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    header = lines[0].split(",")
    assert header == ["t"] + [f"x{k}" for k in range(1, 13)] + [f"p{k}" for k in range(1, 13)]
    assert len(lines) - 1 == round(6 / TRAJ_DEFAULTS["quadcopter"]["delta"]) + 1 == 121
    last = np.array(lines[-1].split(","), dtype=float)
    assert last[0] == 6.0
    np.testing.assert_array_equal(last[1:13], np.array(QUAD_TARGET.split(","), dtype=float))


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hjpdhg.cli", "solve", "--problem", "eikonal+",
                           "--point", "1,1", "--time", "0.1"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("fval ")
