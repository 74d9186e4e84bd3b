"""Command-line interface: subcommands, artifacts, exit codes."""

import numpy as np
import pytest

from kineticfv.cli import main
from kineticfv.mesh import Mesh


@pytest.fixture
def sod_cfg(tmp_path):
    path = tmp_path / "sod.cfg"
    path.write_text("[case]\nname = sod\n\n[time]\nstop_time = 0.01\n\n"
                    "[output]\ndir = %s\n" % (tmp_path / "out"))
    return path


class TestRun:
    def test_run_writes_artifacts(self, sod_cfg, tmp_path, capsys):
        assert main(["run", str(sod_cfg)]) == 0
        out = capsys.readouterr().out
        assert "case sod" in out
        assert "steps" in out and "dt_min" in out
        stem = "sod_weno_s2o3_l"
        for suffix in ("_report.txt", "_residuals.txt", ".vtk"):
            assert (tmp_path / "out" / (stem + suffix)).exists()

    def test_run_no_output(self, sod_cfg, tmp_path, capsys):
        assert main(["run", str(sod_cfg), "--no-output"]) == 0
        assert not (tmp_path / "out").exists()

    def test_set_override(self, sod_cfg, capsys):
        assert main(["run", str(sod_cfg), "--no-output",
                     "--set", "time.scheme=s2o3_g",
                     "--set", "solver.dim_k=2"]) == 0
        assert "scheme s2o3_g" in capsys.readouterr().out

    def test_bad_value_exits_nonzero(self, sod_cfg, capsys):
        assert main(["run", str(sod_cfg), "--set", "time.cfl=-1"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_case_exits_nonzero(self, sod_cfg, capsys):
        assert main(["run", str(sod_cfg), "--case", "vortex"]) == 1
        assert "unknown case" in capsys.readouterr().err

    def test_missing_config_exits_nonzero(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "absent.cfg")]) == 1
        assert "error:" in capsys.readouterr().err


class TestDispatch:
    def test_unknown_command_usage_and_nonzero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_no_command_prints_usage(self, capsys):
        assert main([]) == 2
        assert "usage" in capsys.readouterr().err


class TestConvergence:
    def test_table_printed(self, tmp_path, capsys):
        cfg = tmp_path / "acc.cfg"
        cfg.write_text("[case]\nname = accuracy3d\n"
                       "[time]\nscheme = s2o4_e\nstop_time = 0.05\n")
        assert main(["convergence", str(cfg), "--sizes", "4,8"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert "L2_density_error" in out[0] and "order" in out[0]
        assert len(out) == 3
        err4 = float(out[1].split()[1])
        err8 = float(out[2].split()[1])
        assert err8 < err4
        assert float(out[2].split()[2]) > 1.0

    def test_order_uses_size_ratio(self, tmp_path, capsys):
        # non-doubling sizes: slope must be computed against log(n2/n1)
        cfg = tmp_path / "acc.cfg"
        cfg.write_text("[case]\nname = accuracy3d\n"
                       "[time]\nscheme = s2o4_e\nstop_time = 0.05\n")
        assert main(["convergence", str(cfg), "--sizes", "4,6"]) == 0
        out = capsys.readouterr().out.splitlines()
        e4 = float(out[1].split()[1])
        e6 = float(out[2].split()[1])
        want = np.log(e4 / e6) / np.log(6.0 / 4.0)
        assert float(out[2].split()[2]) == pytest.approx(want, abs=5e-4)

    def test_case_without_exact_rejected(self, sod_cfg, capsys):
        assert main(["convergence", str(sod_cfg)]) == 1
        assert "exact" in capsys.readouterr().err


class TestCompare:
    def test_compare_two_schemes(self, tmp_path, capsys):
        a = tmp_path / "a.cfg"
        b = tmp_path / "b.cfg"
        a.write_text("[case]\nname = sod\n[time]\nstop_time = 0.005\n"
                     "scheme = s2o3_l\n")
        b.write_text("[case]\nname = sod\n[time]\nstop_time = 0.005\n"
                     "scheme = s2o3_g\n")
        assert main(["compare", str(a), str(b)]) == 0
        out = capsys.readouterr().out
        assert "timing ratio A/B" in out
        assert "max|dA - dB| density" in out
        deltas = [float(ln.rsplit("=", 1)[1]) for ln in out.splitlines()
                  if ln.startswith("max|")]
        assert len(deltas) == 5
        assert max(deltas) < 0.1

    def test_different_meshes_rejected(self, tmp_path, capsys):
        a = tmp_path / "a.cfg"
        b = tmp_path / "b.cfg"
        a.write_text("[case]\nname = accuracy3d\n[case]\nn = 4\n"
                     "[time]\nscheme = s2o4_e\nstop_time = 0.01\n")
        b.write_text("[case]\nname = accuracy3d\n[case]\nn = 5\n"
                     "[time]\nscheme = s2o4_e\nstop_time = 0.01\n")
        assert main(["compare", str(a), str(b)]) == 1
        assert "not comparable" in capsys.readouterr().err


class TestExportMesh:
    def test_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "mesh.txt"
        assert main(["export-mesh", "accuracy3d", str(out), "--n", "3"]) == 0
        assert "2500" not in capsys.readouterr().out  # n=3 tets: 162 cells
        mesh = Mesh.from_text(out)
        assert mesh.n_cells == 6 * 3 ** 3

    def test_unknown_case(self, tmp_path, capsys):
        assert main(["export-mesh", "vortex", str(tmp_path / "m.txt")]) == 1
        assert "unknown case" in capsys.readouterr().err

    def test_wrong_mesh_knob(self, tmp_path, capsys):
        assert main(["export-mesh", "sod", str(tmp_path / "m.txt"),
                     "--n", "4"]) == 1
        assert "error" in capsys.readouterr().err
