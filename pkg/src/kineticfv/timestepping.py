"""Time integration on top of the kinetic interface flux.

SpatialOperator assembles the time-averaged flux divergence
L(Q_i) = -(1/V_i) sum_f F.n S over the face quadrature points, in the
face-local frame of each point.  On top of it sit two schemes:

* explicit_s2o4_step: two-stage fourth-order update using the flux time
  derivative extracted from averages over [0, dt] and [0, dt/2],
* implicit_s2o3_step: two-stage third-order update, each stage relaxed
  by k_a pseudo-time iterations whose increments come from LUSGS or
  GMRES (see implicit_solvers).

The *_ode_step functions are the same update formulas specialized to
plain ODE systems dQ/dt = f(Q); they pin down the temporal order of the
two schemes independently of any spatial discretization.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, SolverDivergence
from .implicit_solvers import IncrementSystem, gmres_solve, lusgs_solve
from .kinetic import (GAMMA_DEFAULT, FaceSideData, collision_time,
                      conserved_to_primitive, interface_flux,
                      interface_point_value, make_workspace, state_is_valid)
from .kinetic_kernels import HAVE_NUMBA, bgk_flux_batch
from .reconstruction import GaussGradient, Reconstruction, scatter_sum

__all__ = ["cfl_time_step", "SpatialOperator", "SpatialResidual",
           "explicit_s2o4_step", "implicit_s2o3_step", "pseudo_residual",
           "s2o3_ode_step", "s2o4_ode_step"]


def cfl_time_step(mesh, q, cfl, gamma=GAMMA_DEFAULT):
    """CFL time step: cfl * min over cells of h / (|u| + a)."""
    rho, U, V, W, p = conserved_to_primitive(q[:mesh.n_cells], gamma)
    a = np.sqrt(gamma * p / rho)
    speed = np.sqrt(U * U + V * V + W * W) + a
    return float(cfl * np.min(mesh.h[:mesh.n_cells] / speed))


@dataclass
class SpatialResidual:
    """Flux divergence and byproducts of one operator evaluation."""
    L: np.ndarray                       # (n_cells,5) averaged over [0, dt_s]
    L_half: Optional[np.ndarray] = None  # same over [0, dt_half]
    grad: Optional[np.ndarray] = None    # refreshed cell gradients (compact)
    fallback_faces: int = 0


class SpatialOperator:
    """Precomputed flux-divergence evaluator for one mesh and flavor.

    Calling it fills the ghost rows of q (and of grad for the compact
    flavor) in place, reconstructs, applies boundary overrides and the
    positivity fallback, evaluates the kinetic interface flux averaged
    over [0, dt_s], and scatters the divergence.  mu=None runs the
    inviscid collision time; tau_eps=tau_jump=0 gives tau=0.
    """

    def __init__(self, mesh, boundary_set, flavor="weno", gamma=GAMMA_DEFAULT,
                 mu=None, tau_eps=0.05, tau_jump=2.5, recon_linear=False,
                 chunk=8192, kernel="auto"):
        self.mesh = mesh
        self.bset = boundary_set
        self.gamma = float(gamma)
        self.mu = mu
        self.tau_eps = float(tau_eps)
        self.tau_jump = float(tau_jump)
        # quadrature points per kinetic-flux batch; keeps the moment
        # tables cache-resident on large meshes (numpy path only)
        self.chunk = int(chunk)
        if kernel not in ("auto", "numpy"):
            raise ConfigError("kernel must be 'auto' or 'numpy'")
        self.use_compiled = kernel == "auto" and HAVE_NUMBA
        self.recon = Reconstruction(mesh, flavor=flavor, linear=recon_linear)
        self.compact = self.recon.compact
        self.gauss = GaussGradient(mesh) if self.compact else None
        r = self.recon
        self.pt_own = mesh.f_owner[r.qp_face]
        self.pt_ngh = mesh.f_neigh[r.qp_face]
        self.pt_interior = self.pt_ngh < mesh.n_cells
        self.pt_scatter = np.concatenate([self.pt_own,
                                          self.pt_ngh[self.pt_interior]])
        self.frames = mesh.f_frame[r.qp_face]   # rows n, t1, t2
        self.frames_t = np.ascontiguousarray(self.frames.transpose(0, 2, 1))

    def _rotate_in(self, val, grad):
        R = self.frames
        v = val.copy()
        v[:, 1:4] = (R @ val[:, 1:4, None])[:, :, 0]
        g = R @ grad
        g[:, :, 1:4] = g[:, :, 1:4] @ self.frames_t
        return v, g

    def _rotate_back(self, vec):
        out = vec.copy()
        out[:, 1:4] = (vec[:, None, 1:4] @ self.frames)[:, 0]
        return out

    def _face_tau(self, pL, pR, dt_s):
        """Per-face collision time from area-averaged one-sided pressures."""
        mesh = self.mesh
        r = self.recon
        nf = len(mesh.f_owner)
        num_l = np.bincount(r.qp_face, weights=r.qp_weight * pL, minlength=nf)
        num_r = np.bincount(r.qp_face, weights=r.qp_weight * pR, minlength=nf)
        pbar_l = num_l / mesh.f_area
        pbar_r = num_r / mesh.f_area
        return collision_time(pbar_l, pbar_r, dt_s, mu=self.mu,
                              eps=self.tau_eps, c_jump=self.tau_jump)

    def _scatter(self, w_flux):
        mesh = self.mesh
        n = mesh.n_cells
        vals = np.concatenate([-w_flux, w_flux[self.pt_interior]])
        L = scatter_sum(self.pt_scatter, vals, n)
        L /= mesh.vol[:n, None]
        return L

    def __call__(self, q, grad=None, dt_s=None, dt_half=None, point_time=None):
        mesh = self.mesh
        r = self.recon
        self.bset.fill_ghost_averages(q)
        if self.compact:
            if grad is None:
                raise ValueError("compact flavor needs a gradient field")
            self.bset.fill_ghost_gradients(grad, q)
        coeffs = r.reconstruct(q, grad)
        valL, valR, gradL, gradR = r.face_values(q, coeffs)
        self.bset.override_face_data(valL, valR, gradL, gradR)
        ok = (state_is_valid(valL, self.gamma).all(axis=1)
              & state_is_valid(valR, self.gamma).all(axis=1))
        nfall = r.apply_positivity_fallback(q, valL, valR, gradL, gradR, ok)

        pf, ps = r.qp_face, r.qp_slot
        vL, gL = self._rotate_in(valL[pf, ps], gradL[pf, ps])
        vR, gR = self._rotate_in(valR[pf, ps], gradR[pf, ps])
        g1 = self.gamma - 1.0
        pL = g1 * (vL[:, 4] - 0.5 * (vL[:, 1:4] ** 2).sum(1) / vL[:, 0])
        pR = g1 * (vR[:, 4] - 0.5 * (vR[:, 1:4] ** 2).sum(1) / vR[:, 0])
        tau = self._face_tau(pL, pR, dt_s)[pf]

        npts = len(vL)
        want_point = self.compact and point_time is not None
        flux = np.empty((npts, 5))
        flux_half = np.empty((npts, 5)) if dt_half is not None else None
        wp = np.empty((npts, 5)) if want_point else None
        if self.use_compiled:
            dummy = np.empty((1, 5))
            bgk_flux_batch(vL, gL, vR, gR, tau, self.gamma, dt_s,
                           dt_half if dt_half is not None else 0.0,
                           dt_half is not None,
                           point_time if want_point else 0.0, want_point,
                           flux, flux_half if flux_half is not None else dummy,
                           wp if wp is not None else dummy)
        else:
            for lo in range(0, npts, self.chunk):
                sl = slice(lo, lo + self.chunk)
                left = FaceSideData(q=vL[sl], dq=gL[sl])
                right = FaceSideData(q=vR[sl], dq=gR[sl])
                ws = make_workspace(left, right, self.gamma)
                if dt_half is None:
                    flux[sl] = interface_flux(left, right, tau[sl], dt_s,
                                              gamma=self.gamma, workspace=ws)
                else:
                    flux[sl], flux_half[sl] = interface_flux(
                        left, right, tau[sl], dt_s, dt_half,
                        gamma=self.gamma, workspace=ws)
                if want_point:
                    wp[sl] = interface_point_value(
                        left, right, tau[sl], point_time, gamma=self.gamma,
                        workspace=ws)
        bad = ~np.isfinite(flux).all(axis=1)
        if flux_half is not None:
            bad |= ~np.isfinite(flux_half).all(axis=1)
        if bad.any():
            fid = int(pf[np.flatnonzero(bad)[0]])
            raise SolverDivergence(f"flux not finite at face {fid}")

        w = r.qp_weight[:, None]
        L = self._scatter(w * self._rotate_back(flux))
        L_half = None
        if flux_half is not None:
            L_half = self._scatter(w * self._rotate_back(flux_half))

        grad_new = None
        if want_point:
            grad_new = self.gauss(self._rotate_back(wp))
        return SpatialResidual(L=L, L_half=L_half, grad=grad_new,
                               fallback_faces=nfall)


# ---------------------------------------------------------------------------
# explicit two-stage fourth-order scheme


def _flux_derivative(ev, dt):
    """Instantaneous L and dL/dt from averages over [0,dt] and [0,dt/2]."""
    L0 = 2.0 * ev.L_half - ev.L
    Lt = 4.0 * (ev.L - ev.L_half) / dt
    return L0, Lt


def explicit_s2o4_step(op, q, dt, grad=None):
    """One explicit step; returns (q_new, grad_new, stats).

    q is (n_total,5) with ghost rows owned by the operator; only the
    interior rows advance.  The compact flavor refreshes gradients from
    the interface values at the half step of each stage.
    """
    n = op.mesh.n_cells
    pt = 0.5 * dt if op.compact else None
    ev1 = op(q, grad, dt_s=dt, dt_half=0.5 * dt, point_time=pt)
    L0, Lt = _flux_derivative(ev1, dt)
    qs = q.copy()
    qs[:n] = q[:n] + 0.5 * dt * L0 + 0.125 * dt * dt * Lt
    ev2 = op(qs, ev1.grad if op.compact else None, dt_s=dt, dt_half=0.5 * dt,
             point_time=pt)
    L0s, Lts = _flux_derivative(ev2, dt)
    q1 = q.copy()
    q1[:n] = q[:n] + dt * L0 + dt * dt / 6.0 * (Lt + 2.0 * Lts)
    scale = max(1.0, np.abs(q[:n]).max())
    if not np.isfinite(q1[:n]).all() or np.abs(q1[:n]).max() > 1e6 * scale:
        raise SolverDivergence("explicit step diverged (state growth > 1e6x)")
    stats = {"fallback_faces": ev1.fallback_faces + ev2.fallback_faces}
    return q1, (ev2.grad if op.compact else None), stats


# ---------------------------------------------------------------------------
# implicit two-stage third-order scheme


def pseudo_residual(stage, qn, qm, dt, L_n, L_m, L_star=None):
    """RHS of the stage system at pseudo-iterate qm (interior rows)."""
    if stage == 1:
        return (qn - qm) * (2.0 / dt) + 0.5 * (L_n + L_m)
    if stage == 2:
        return (qn - qm) / dt + (L_n + 4.0 * L_star + L_m) / 6.0
    raise ValueError(f"stage must be 1 or 2, got {stage}")


_GMRES_KEYS = ("dim_k", "restarts", "tol", "jacobi_sweeps")


def implicit_s2o3_step(op, q, dt, dt_s, dt_a, grad=None, k_a=3,
                       solver="lusgs", solver_opts=None, lam_mode="average",
                       log=None):
    """One implicit step; returns (q_new, grad_new, stats).

    Each stage runs k_a pseudo-iterations with the stage RHS frozen at
    L(Q^n) (and L(Q^*) in stage 2).  log, when given, is called as
    log(stage, m, r5) with the per-equation L2 pseudo-residual before
    each increment solve.  stats['diverged'] flags pseudo-residual
    growth over a stage; the caller decides whether to warn or retry.
    """
    opts = dict(solver_opts or {})
    if solver == "lusgs":
        sweeps = int(opts.pop("sweeps", 1))
    elif solver == "gmres":
        bad = set(opts) - set(_GMRES_KEYS)
        if bad:
            raise ConfigError(f"unknown gmres option(s): {sorted(bad)}")
    else:
        raise ConfigError(f"unknown increment solver '{solver}'")
    mesh = op.mesh
    n = mesh.n_cells
    pt = 0.0 if op.compact else None
    qn = q.copy()
    # The stage systems need the instantaneous operator L(Q).  A single
    # kinetic flux evaluation yields averages over [0, dt_s]; feeding that
    # average in directly would bias every stage by O(dt_s * dL/dt), a
    # mesh-pinned error no dt refinement can remove.  Recombining the half
    # and full window averages cancels the linear-in-time part.
    ev_n = op(qn, grad, dt_s=dt_s, dt_half=0.5 * dt_s, point_time=pt)
    L_n = 2.0 * ev_n.L_half - ev_n.L
    stats = {"pseudo": [], "fallback_faces": ev_n.fallback_faces,
             "diverged": False, "solver_info": None}

    def relax(stage, alpha, sigma, L_star):
        qm = qn.copy()
        gm = grad
        ev = ev_n
        first = last = None
        for m in range(k_a):
            if m > 0:
                ev = op(qm, gm, dt_s=dt_s, dt_half=0.5 * dt_s, point_time=pt)
                stats["fallback_faces"] += ev.fallback_faces
            L_m = 2.0 * ev.L_half - ev.L
            rhs = pseudo_residual(stage, qn[:n], qm[:n], dt, L_n, L_m, L_star)
            r5 = np.sqrt(np.mean(rhs ** 2, axis=0))
            stats["pseudo"].append((stage, m, r5))
            if log is not None:
                log(stage, m, r5)
            total = float(r5.sum())
            first = total if first is None else first
            last = total
            system = IncrementSystem(mesh, qm, alpha, sigma, rhs,
                                     gamma=op.gamma, lam_mode=lam_mode)
            if solver == "lusgs":
                dq = lusgs_solve(system, sweeps=sweeps)
            else:
                dq, info = gmres_solve(system, **opts)
                stats["solver_info"] = info
            qm[:n] += dq
            if op.compact:
                gm = ev.grad
        if last is not None and last > 2.0 * first:
            stats["diverged"] = True
        return qm, gm

    q_star, g_star = relax(1, 1.0 / dt_a + 2.0 / dt, 0.5, None)
    ev_star = op(q_star, g_star, dt_s=dt_s, dt_half=0.5 * dt_s, point_time=pt)
    stats["fallback_faces"] += ev_star.fallback_faces
    L_star = 2.0 * ev_star.L_half - ev_star.L
    q1, g1 = relax(2, 1.0 / dt_a + 1.0 / dt, 1.0 / 6.0, L_star)
    return q1, (g1 if op.compact else None), stats


# ---------------------------------------------------------------------------
# ODE-level reference forms (temporal order checks)


def s2o3_ode_step(f, df, q, dt, tol=1e-12, max_iter=100):
    """Two-stage third-order step for dQ/dt = f(Q), stages Newton-solved.

    df is the elementwise derivative of f (diagonal Jacobian systems).
    """
    q = np.asarray(q, dtype=float)
    fn = f(q)
    x = q + 0.5 * dt * fn
    for _ in range(max_iter):
        res = x - q - 0.25 * dt * (fn + f(x))
        if np.max(np.abs(res)) < tol:
            break
        x = x - res / (1.0 - 0.25 * dt * df(x))
    qs = x
    x = q + dt * f(qs)
    for _ in range(max_iter):
        res = x - q - dt / 6.0 * (fn + 4.0 * f(qs) + f(x))
        if np.max(np.abs(res)) < tol:
            break
        x = x - res / (1.0 - dt / 6.0 * df(x))
    return x


def s2o4_ode_step(f, df, q, dt):
    """Two-stage fourth-order step with exact time derivatives f' f."""
    q = np.asarray(q, dtype=float)
    k = f(q)
    kt = df(q) * k
    qs = q + 0.5 * dt * k + 0.125 * dt * dt * kt
    ks = f(qs)
    kts = df(qs) * ks
    return q + dt * k + dt * dt / 6.0 * (kt + 2.0 * kts)
