"""Physical-time driver: step loop, reports, residual history, retries."""

import numpy as np
import pytest

import kineticfv.driver as drv
from kineticfv.cases import CASES, CaseSpec, TimeControls
from kineticfv.config import SolverConfig
from kineticfv.driver import resolve_case, run_case, run_config
from kineticfv.errors import ConfigError
from kineticfv.mesh import generate_box_hex
from kineticfv.output import read_report


def _uniform_case(n=3, vel=(0.3, 0.2, -0.1), stop=0.5):
    """Constant state on a periodic box: every scheme must hold it."""
    w = np.array([1.0, *vel, 0.8])

    def make_mesh(n=n):
        xs = np.linspace(0.0, 1.0, n + 1)
        return generate_box_hex(xs, xs, xs, periodic=(True, True, True))

    return CaseSpec(name="uniform", make_mesh=make_mesh,
                    initial=lambda x: np.tile(w, (len(x), 1)),
                    boundaries=dict, stop_time=stop,
                    time=TimeControls(cfl=3.0, k_a=2, explicit_cfl=0.6))


class TestRunCase:
    def test_uniform_state_is_fixed_point(self):
        case = _uniform_case()
        res = run_case(case, scheme="s2o4_e", max_steps=3)
        q0 = case.initial_conserved(res.mesh)[:res.mesh.n_cells]
        assert np.abs(res.q[:res.mesh.n_cells] - q0).max() < 1.0e-12
        assert res.report.steps == 3

    def test_final_time_hits_stop_exactly(self):
        case = _uniform_case(stop=0.25)
        res = run_case(case, scheme="s2o4_e")
        assert res.report.final_time == pytest.approx(0.25, abs=1.0e-14)
        assert 0.0 < res.report.dt_min <= 0.25

    def test_report_bookkeeping(self):
        case = _uniform_case(stop=0.2)
        res = run_case(case, scheme="s2o3_l", collect_history=True)
        rep = res.report
        assert rep.case == "uniform"
        assert rep.scheme == "s2o3_l"
        assert rep.flavor == "weno"
        assert rep.steps == len(res.history)
        assert rep.dt_min == pytest.approx(min(dt for _, dt in res.history))
        assert rep.final_time == pytest.approx(res.history[-1][0])
        assert rep.wall_time > 0.0

    def test_residual_log_line_count_invariant(self):
        # one line per pseudo-iteration: steps * 2 stages * k_a
        case = _uniform_case(stop=0.3)
        res = run_case(case, scheme="s2o3_l", k_a=3)
        assert len(res.residuals.records) == res.report.steps * 2 * 3
        steps = sorted({rec[0] for rec in res.residuals.records})
        assert steps == list(range(1, res.report.steps + 1))

    def test_case_control_defaults_are_used(self):
        case = _uniform_case(stop=0.2)   # k_a = 2 in TimeControls
        res = run_case(case, scheme="s2o3_l")
        assert len(res.residuals.records) == res.report.steps * 2 * 2

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ConfigError, match="scheme"):
            run_case(_uniform_case(), scheme="rk3")

    def test_max_steps_caps_run(self):
        case = _uniform_case(stop=100.0)
        res = run_case(case, scheme="s2o4_e", max_steps=2)
        assert res.report.steps == 2
        assert res.report.final_time < 100.0

    def test_hweno_seeds_initial_gradients(self):
        case = _uniform_case(stop=0.1)
        res = run_case(case, flavor="hweno", scheme="s2o3_l", max_steps=1)
        assert res.grad is not None
        assert np.all(np.isfinite(res.grad))


class TestDivergenceRetry:
    def _fake_step(self, diverge_above):
        calls = []

        def fake(op, q, dt, dt_s, dt_a, grad=None, k_a=3, solver="lusgs",
                 solver_opts=None, lam_mode="average", log=None):
            calls.append(dt)
            if log is not None:
                log(1, 0, np.full(5, dt))
            return q, grad, {"diverged": dt > diverge_above,
                             "fallback_faces": 0}
        return fake, calls

    def test_dt_halved_until_stable(self, monkeypatch):
        case = _uniform_case(stop=0.2)
        fake, calls = self._fake_step(diverge_above=0.04)
        monkeypatch.setattr(drv, "implicit_s2o3_step", fake)
        with pytest.warns(RuntimeWarning, match="retrying"):
            res = run_case(case, scheme="s2o3_l", max_steps=1,
                           halve_on_divergence=True)
        assert len(calls) >= 2
        assert calls[-1] <= 0.04
        assert calls[0] > 0.04
        # only the accepted attempt's records remain
        assert len(res.residuals.records) == 1
        assert res.residuals.records[0][3] == pytest.approx(calls[-1])

    def test_divergence_without_retry_warns_once(self, monkeypatch):
        case = _uniform_case(stop=0.2)
        fake, calls = self._fake_step(diverge_above=0.0)
        monkeypatch.setattr(drv, "implicit_s2o3_step", fake)
        with pytest.warns(RuntimeWarning, match="diverged"):
            run_case(case, scheme="s2o3_l", max_steps=1,
                     halve_on_divergence=False)
        assert len(calls) == 1


class TestRunConfig:
    def test_unknown_case_rejected(self):
        with pytest.raises(ConfigError, match="unknown case"):
            resolve_case(SolverConfig(case_name="vortex"))

    def test_mesh_n_on_scale_case_rejected(self):
        cfg = SolverConfig(case_name="sod", mesh_n=50)
        with pytest.raises(ConfigError, match="mesh size"):
            run_config(cfg, write_outputs=False)

    def test_scale_on_n_case_rejected(self):
        cfg = SolverConfig(case_name="accuracy3d", mesh_scale="desk")
        with pytest.raises(ConfigError, match="scale"):
            run_config(cfg, write_outputs=False)

    def test_artifacts_written_and_report_reloads(self, tmp_path):
        cfg = SolverConfig(case_name="sod", stop_time=0.01,
                           out_dir=str(tmp_path / "out"))
        res = run_config(cfg)
        stem = "sod_weno_s2o3_l"
        report_path = tmp_path / "out" / (stem + "_report.txt")
        log_path = tmp_path / "out" / (stem + "_residuals.txt")
        vtk_path = tmp_path / "out" / (stem + ".vtk")
        assert report_path.exists() and log_path.exists() and vtk_path.exists()
        assert read_report(report_path) == res.report

    def test_gmres_options_flow_through(self):
        cfg = SolverConfig(case_name="sod", scheme="s2o3_g", stop_time=0.005,
                           dim_k=2, restarts=1, tol=1.0e-4)
        res = run_config(cfg, write_outputs=False)
        assert res.report.steps >= 1
        assert np.all(np.isfinite(res.q))
