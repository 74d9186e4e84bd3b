"""Physical-time run driver.

Advances a case from its initial state to its stop time with one of the
three schemes (explicit s2o4_e, implicit s2o3_l / s2o3_g), tracking the
smallest physical step, collecting the pseudo-residual history for the
implicit schemes, and timing the step loop (setup and output excluded).
"""

import inspect
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cases import CASES
from .config import SolverConfig
from .errors import ConfigError
from .output import ResidualLog, RunReport, write_report, write_vtk
from .timestepping import (SpatialOperator, cfl_time_step, explicit_s2o4_step,
                           implicit_s2o3_step)

IMPLICIT_SCHEMES = {"s2o3_l": "lusgs", "s2o3_g": "gmres"}
MAX_HALVINGS = 3


@dataclass
class RunResult:
    """Everything a caller might want after a run."""

    report: RunReport
    mesh: object
    q: np.ndarray
    grad: object
    residuals: ResidualLog
    case: object
    op: SpatialOperator
    history: list = field(default_factory=list)   # (t, dt) per step


def run_case(case, flavor="weno", scheme="s2o3_l", mesh=None, mesh_kw=None,
             cfl=None, cfl_accel=None, explicit_cfl=None, k_a=None,
             stop_time=None, max_steps=100000, solver_opts=None,
             lam_mode="average", recon_linear=None,
             halve_on_divergence=False, collect_history=False,
             output_every=0, dump=None):
    """Run one case to its stop time; returns a RunResult.

    Control parameters left as None fall back to the case's documented
    defaults.  ``mesh`` may be supplied directly (overrides mesh_kw).
    """
    if scheme not in ("s2o4_e",) and scheme not in IMPLICIT_SCHEMES:
        raise ConfigError("unknown scheme %r" % scheme)
    tc = case.time
    cfl = tc.cfl if cfl is None else cfl
    cfl_accel = tc.cfl_accel if cfl_accel is None else cfl_accel
    explicit_cfl = tc.explicit_cfl if explicit_cfl is None else explicit_cfl
    k_a = tc.k_a if k_a is None else k_a
    stop = case.stop_time if stop_time is None else stop_time
    linear = case.recon_linear if recon_linear is None else recon_linear

    if mesh is None:
        mesh = case.make_mesh(**(mesh_kw or {}))
    bset = case.boundary_set(mesh)
    op = SpatialOperator(mesh, bset, flavor=flavor, gamma=case.gamma,
                         mu=case.mu, tau_eps=case.tau_eps,
                         tau_jump=case.tau_jump, recon_linear=linear)
    q = case.initial_conserved(mesh)
    grad = case.initial_gradients(mesh) if flavor == "hweno" else None

    implicit = scheme in IMPLICIT_SCHEMES
    solver = IMPLICIT_SCHEMES.get(scheme)
    opts = dict(solver_opts or {})
    if implicit and solver == "gmres":
        opts.setdefault("dim_k", case.dim_k)

    log = ResidualLog()
    history = []
    t = 0.0
    steps = 0
    dt_min = np.inf
    # smallest step the CFL condition picked, before stop-time clipping;
    # the landing step can be arbitrarily short and says nothing about
    # the scheme's stable step size
    dt_min_cfl = np.inf
    fallback_total = 0
    t0 = time.perf_counter()
    while t < stop * (1.0 - 1.0e-12) and steps < max_steps:
        if implicit:
            dt_c = cfl_time_step(mesh, q, cfl, case.gamma)
            dt = min(dt_c, stop - t)
            dt_s = min(dt, cfl_time_step(mesh, q, 1.0, case.gamma))
            dt_a = cfl_time_step(mesh, q, cfl_accel, case.gamma)
            mark = len(log.records)
            for attempt in range(MAX_HALVINGS + 1):
                q_new, grad_new, stats = implicit_s2o3_step(
                    op, q, dt=dt, dt_s=dt_s, dt_a=dt_a, grad=grad, k_a=k_a,
                    solver=solver, solver_opts=opts, lam_mode=lam_mode,
                    log=log.callback(steps + 1))
                if not stats["diverged"]:
                    break
                if not halve_on_divergence or attempt == MAX_HALVINGS:
                    warnings.warn("pseudo-iterations diverged at step %d"
                                  % (steps + 1), RuntimeWarning,
                                  stacklevel=2)
                    break
                del log.records[mark:]
                dt *= 0.5
                dt_c = dt  # instability-driven cut counts as the stable step
                dt_s = min(dt_s, dt)
                warnings.warn("pseudo-iterations diverged at step %d; "
                              "retrying with dt = %g" % (steps + 1, dt),
                              RuntimeWarning, stacklevel=2)
        else:
            dt_c = cfl_time_step(mesh, q, explicit_cfl, case.gamma)
            dt = min(dt_c, stop - t)
            q_new, grad_new, stats = explicit_s2o4_step(op, q, dt, grad=grad)
        q, grad = q_new, grad_new
        t += dt
        steps += 1
        dt_min = min(dt_min, dt)
        dt_min_cfl = min(dt_min_cfl, dt_c)
        fallback_total += stats["fallback_faces"]
        if collect_history:
            history.append((t, dt))
        if dump is not None and output_every and steps % output_every == 0:
            dump(steps, t, q)
    wall = time.perf_counter() - t0

    report = RunReport(case=case.name, flavor=flavor, scheme=scheme,
                       steps=steps, wall_time=wall,
                       dt_min=float(dt_min) if steps else 0.0,
                       final_time=t,
                       diagnostics={"fallback_faces": float(fallback_total),
                                    "dt_min_cfl":
                                        float(dt_min_cfl) if steps else 0.0})
    return RunResult(report=report, mesh=mesh, q=q, grad=grad, residuals=log,
                     case=case, op=op, history=history)


def _mesh_kwargs(case, cfg):
    params = inspect.signature(case.make_mesh).parameters
    kw = {}
    if cfg.mesh_n is not None:
        if "n" not in params:
            raise ConfigError("case %r does not take a mesh size n"
                              % case.name)
        kw["n"] = cfg.mesh_n
    if cfg.mesh_scale is not None:
        if "scale" not in params:
            raise ConfigError("case %r does not take a mesh scale"
                              % case.name)
        kw["scale"] = cfg.mesh_scale
    return kw


def resolve_case(cfg: SolverConfig):
    if cfg.case_name not in CASES:
        raise ConfigError("unknown case %r; choose from %s"
                          % (cfg.case_name, ", ".join(sorted(CASES))))
    return CASES[cfg.case_name]()


def run_config(cfg: SolverConfig, write_outputs=True):
    """Run from a SolverConfig; optionally write report/residuals/VTK to
    cfg.out_dir.  Returns the RunResult."""
    case = resolve_case(cfg)
    solver_opts = {}
    if cfg.scheme == "s2o3_g":
        solver_opts = {"dim_k": cfg.dim_k if cfg.dim_k is not None
                       else case.dim_k,
                       "restarts": cfg.restarts, "tol": cfg.tol,
                       "jacobi_sweeps": cfg.jacobi_sweeps}
    elif cfg.scheme == "s2o3_l":
        solver_opts = {"sweeps": cfg.sweeps}
    out = Path(cfg.out_dir)
    stem = "%s_%s_%s" % (case.name, cfg.flavor, cfg.scheme)
    dump = None
    if write_outputs and cfg.output_every > 0:
        out.mkdir(parents=True, exist_ok=True)
        mesh = case.make_mesh(**_mesh_kwargs(case, cfg))

        def dump(step, t, q, mesh=mesh):
            write_vtk(out / ("%s_step%05d.vtk" % (stem, step)), mesh, q,
                      gamma=case.gamma)
    else:
        mesh = None
    result = run_case(case, flavor=cfg.flavor, scheme=cfg.scheme, mesh=mesh,
                      mesh_kw=_mesh_kwargs(case, cfg), cfl=cfg.cfl,
                      cfl_accel=cfg.cfl_accel, explicit_cfl=cfg.explicit_cfl,
                      k_a=cfg.k_a, stop_time=cfg.stop_time,
                      max_steps=cfg.max_steps, solver_opts=solver_opts,
                      lam_mode=cfg.lam_mode, recon_linear=cfg.recon_linear,
                      halve_on_divergence=cfg.halve_on_divergence,
                      output_every=cfg.output_every, dump=dump)
    if write_outputs:
        out.mkdir(parents=True, exist_ok=True)
        if result.residuals.records:
            log_path = out / (stem + "_residuals.txt")
            result.residuals.write(log_path)
            result.report.residual_log = str(log_path)
        write_vtk(out / (stem + ".vtk"), result.mesh, result.q,
                  gamma=case.gamma)
        write_report(out / (stem + "_report.txt"), result.report)
    return result
