"""Benchmark case definitions and the analytic oracles used to judge runs.

Each case bundles a mesh recipe, a pointwise primitive initial state,
boundary conditions keyed by patch name, physical constants, and the
time-marching controls it is normally run with.  Desk-scale presets keep
the heavy problems tractable on one workstation; the full-resolution
setups stay available through ``scale="full"``.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .boundary import (BoundarySet, NoSlipAdiabatic, NoSlipIsothermal,
                       NonReflecting, Symmetry)
from .errors import ConfigError, InvalidState
from .kinetic import GAMMA_DEFAULT, primitive_to_conserved
from .mesh import (generate_box_hex, generate_box_tet6, tanh_stretch_nodes,
                   wall_refine_map)

__all__ = [
    "TimeControls", "CaseSpec", "case_accuracy3d", "case_sod", "case_lax",
    "case_riemann2d", "case_viscous_shock_tube", "case_cavity",
    "exact_riemann", "riemann_star", "error_norms", "observed_order", "CASES",
]


@dataclass
class TimeControls:
    cfl: float = 3.0
    cfl_accel: float = 2000.0       # artificial (pseudo) time CFL
    k_a: int = 3                    # pseudo-iterations per stage
    explicit_cfl: float = 0.5


@dataclass
class CaseSpec:
    name: str
    make_mesh: Callable
    initial: Callable                 # (m,3) positions -> (m,5) primitives
    boundaries: Callable              # () -> {patch: BoundaryCondition}
    stop_time: float
    time: TimeControls = field(default_factory=TimeControls)
    gamma: float = GAMMA_DEFAULT
    mu: Optional[float] = None        # None: inviscid
    tau_eps: float = 0.05             # collision-time jump model
    tau_jump: float = 2.5
    dim_k: int = 3                    # GMRES Krylov dimension hint
    recon_linear: bool = False        # smooth-flow runs skip Z-weighting
    exact: Optional[Callable] = None  # (x (m,3), t) -> (m,5) primitives
    output_every: int = 0             # physical steps between field dumps

    def __post_init__(self):
        if self.mu is not None and self.mu < 0.0:
            raise ConfigError("viscosity must be non-negative")

    def initial_conserved(self, mesh):
        """Exact-quadrature cell averages of the conserved initial state,
        ghosts zeroed (the boundary set fills them at run time)."""
        def qfun(x):
            w = self.initial(x)
            return primitive_to_conserved(w[:, 0], w[:, 1], w[:, 2], w[:, 3],
                                          w[:, 4], gamma=self.gamma)
        q = np.zeros((mesh.n_total, 5))
        q[:mesh.n_cells] = mesh.cell_average(qfun)
        return q

    def initial_gradients(self, mesh, eps=1.0e-6):
        """Cell-averaged spatial gradients of the conserved initial state,
        by central differencing of the pointwise field; ghosts zeroed.
        Only needed to seed compact (hweno) runs."""
        def qfun(x):
            w = self.initial(x)
            return primitive_to_conserved(w[:, 0], w[:, 1], w[:, 2], w[:, 3],
                                          w[:, 4], gamma=self.gamma)
        grad = np.zeros((mesh.n_total, 3, 5))
        for ax in range(3):
            def dfun(x, ax=ax):
                xp = x.copy()
                xm = x.copy()
                xp[:, ax] += eps
                xm[:, ax] -= eps
                return (qfun(xp) - qfun(xm)) / (2.0 * eps)
            grad[:mesh.n_cells, ax] = mesh.cell_average(dfun)
        return grad

    def boundary_set(self, mesh):
        return BoundarySet(mesh, self.boundaries(), gamma=self.gamma)

    def validate(self, **mesh_kw):
        """Build the (desk) mesh and wire the boundary set; raises on
        missing patches, bad coverage or unbuildable geometry."""
        mesh = self.make_mesh(**mesh_kw)
        self.boundary_set(mesh)
        return mesh


# -- individual cases --------------------------------------------------------

def case_accuracy3d():
    """Periodic advection of a density sine wave across a tet box."""

    def make_mesh(n=10):
        xs = np.linspace(0.0, 2.0, n + 1)
        return generate_box_tet6(xs, xs, xs, periodic=(True, True, True))

    def initial(x):
        w = np.empty((len(x), 5))
        w[:, 0] = 1.0 + 0.2 * np.sin(np.pi * x.sum(1))
        w[:, 1:4] = 1.0
        w[:, 4] = 1.0
        return w

    def exact(x, t):
        w = np.empty((len(x), 5))
        w[:, 0] = 1.0 + 0.2 * np.sin(np.pi * (x.sum(1) - 3.0 * t))
        w[:, 1:4] = 1.0
        w[:, 4] = 1.0
        return w

    return CaseSpec(
        name="accuracy3d", make_mesh=make_mesh, initial=initial,
        boundaries=lambda: {}, stop_time=2.0,
        time=TimeControls(cfl=3.0, k_a=5),
        tau_eps=0.0, tau_jump=0.0, dim_k=10, recon_linear=True, exact=exact)


def _riemann1d_case(name, left, right, cfl, k_a, stop):
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)

    def make_mesh():
        return generate_box_hex(np.linspace(0.0, 1.0, 101),
                                np.linspace(0.0, 0.1, 6),
                                np.linspace(0.0, 0.1, 6))

    def initial(x):
        return np.where(x[:, :1] < 0.5, left[None], right[None])

    def boundaries():
        return {p: NonReflecting() for p in
                ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")}

    spec = CaseSpec(name=name, make_mesh=make_mesh, initial=initial,
                    boundaries=boundaries, stop_time=stop,
                    time=TimeControls(cfl=cfl, k_a=k_a))
    spec.left, spec.right = left, right
    return spec


def case_sod():
    return _riemann1d_case("sod", (1.0, 0.0, 0.0, 0.0, 1.0),
                           (0.125, 0.0, 0.0, 0.0, 0.1),
                           cfl=2.5, k_a=4, stop=0.2)


def case_lax():
    return _riemann1d_case("lax", (0.445, 0.698, 0.0, 0.0, 3.528),
                           (0.5, 0.0, 0.0, 0.0, 0.571),
                           cfl=3.0, k_a=3, stop=0.14)


_RIEMANN2D_QUADRANTS = (
    # (x > .5, y > .5), (x < .5, y > .5), (x < .5, y < .5), (x > .5, y < .5)
    (1.5, 0.0, 0.0, 0.0, 1.5),
    (0.5323, 1.206, 0.0, 0.0, 0.3),
    (0.138, 1.206, 1.206, 0.0, 0.029),
    (0.5323, 0.0, 1.206, 0.0, 0.3),
)


def case_riemann2d():
    """Four-shock quadrant interaction in a thin slab."""

    def make_mesh(scale="desk"):
        n = {"desk": 100, "full": 400}[scale]
        return generate_box_hex(np.linspace(0.0, 1.0, n + 1),
                                np.linspace(0.0, 1.0, n + 1),
                                np.linspace(0.0, 0.03, 4))

    quad = np.array(_RIEMANN2D_QUADRANTS)

    def initial(x):
        right = x[:, 0] > 0.5
        top = x[:, 1] > 0.5
        idx = np.where(top, np.where(right, 0, 1), np.where(right, 3, 2))
        return quad[idx]

    def boundaries():
        return {p: NonReflecting() for p in
                ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")}

    return CaseSpec(name="riemann2d", make_mesh=make_mesh, initial=initial,
                    boundaries=boundaries, stop_time=0.4,
                    time=TimeControls(cfl=3.0, k_a=3))


def case_viscous_shock_tube():
    """Shock/boundary-layer interaction in a half-height tube, Re=200."""
    gamma = GAMMA_DEFAULT
    rho_ref = 1.2
    a_ref = np.sqrt(gamma * (rho_ref / gamma) / rho_ref)  # = 1
    mu = rho_ref * a_ref * 1.0 / 200.0

    def make_mesh(scale="desk"):
        nx, ny = {"desk": (250, 125), "full": (500, 250)}[scale]
        xs = np.linspace(0.0, 1.0, nx + 1)
        ys = wall_refine_map(np.linspace(0.0, 0.5, ny + 1))
        zs = np.linspace(0.0, 0.006, 4)
        return generate_box_hex(xs, ys, zs)

    left = np.array([120.0, 0.0, 0.0, 0.0, 120.0 / gamma])
    right = np.array([1.2, 0.0, 0.0, 0.0, 1.2 / gamma])

    def initial(x):
        return np.where(x[:, :1] < 0.5, left[None], right[None])

    def boundaries():
        return {"ymax": Symmetry(), "zmin": Symmetry(), "zmax": Symmetry(),
                "xmin": NoSlipAdiabatic(), "xmax": NoSlipAdiabatic(),
                "ymin": NoSlipAdiabatic()}

    return CaseSpec(name="viscous_shock_tube", make_mesh=make_mesh,
                    initial=initial, boundaries=boundaries, stop_time=1.0,
                    time=TimeControls(cfl=3.5, k_a=3), mu=mu)


def case_cavity(re=1000):
    """Lid-driven cubic cavity at Ma 0.15 on wall-refined tets."""
    if re not in (1000, 3200):
        raise ConfigError(f"cavity is defined for Re in {{1000, 3200}}, got {re}")
    gamma = GAMMA_DEFAULT
    rho0, p0 = 1.0, 1.0 / gamma      # sound speed 1
    t_wall = p0 / rho0
    u_lid = 0.15
    mu = rho0 * u_lid * 1.0 / re

    def make_mesh(scale="desk"):
        n = {"desk": 12, "full": 20}[scale]
        xs = tanh_stretch_nodes(n, 2.5e-2)
        return generate_box_tet6(xs, xs, xs)

    def initial(x):
        w = np.zeros((len(x), 5))
        w[:, 0] = rho0
        w[:, 4] = p0
        return w

    def boundaries():
        conds = {p: NoSlipIsothermal(t_wall) for p in
                 ("xmin", "xmax", "ymin", "zmin", "zmax")}
        conds["ymax"] = NoSlipIsothermal(t_wall, u_wall=(u_lid, 0.0, 0.0))
        return conds

    tc = TimeControls(cfl=6.0 if re == 3200 else 3.0, k_a=1)
    spec = CaseSpec(name=f"cavity_re{re}", make_mesh=make_mesh,
                    initial=initial, boundaries=boundaries, stop_time=50.0,
                    time=tc, mu=mu, dim_k=2 if re == 3200 else 3)
    spec.u_lid = u_lid
    return spec


CASES = {
    "accuracy3d": case_accuracy3d,
    "sod": case_sod,
    "lax": case_lax,
    "riemann2d": case_riemann2d,
    "viscous_shock_tube": case_viscous_shock_tube,
    "cavity_re1000": lambda: case_cavity(1000),
    "cavity_re3200": lambda: case_cavity(3200),
}


# -- exact Riemann solution (oracle) -----------------------------------------

def _pressure_fn(p, rho_k, p_k, a_k, gamma):
    """f_K(p) and df/dp of the standard two-wave solution."""
    if p > p_k:  # shock
        A = 2.0 / ((gamma + 1.0) * rho_k)
        B = (gamma - 1.0) / (gamma + 1.0) * p_k
        root = np.sqrt(A / (p + B))
        f = (p - p_k) * root
        df = root * (1.0 - 0.5 * (p - p_k) / (p + B))
    else:        # rarefaction
        f = 2.0 * a_k / (gamma - 1.0) * ((p / p_k) **
                                         ((gamma - 1.0) / (2.0 * gamma)) - 1.0)
        df = 1.0 / (rho_k * a_k) * (p / p_k) ** (-(gamma + 1.0) / (2.0 * gamma))
    return f, df


def riemann_star(left, right, gamma=GAMMA_DEFAULT):
    """Star-region (p*, u*) of the 1D Riemann problem; raises on vacuum."""
    rho_l, u_l, p_l = (float(v) for v in left)
    rho_r, u_r, p_r = (float(v) for v in right)
    a_l = np.sqrt(gamma * p_l / rho_l)
    a_r = np.sqrt(gamma * p_r / rho_r)
    if 2.0 * (a_l + a_r) / (gamma - 1.0) <= u_r - u_l:
        raise InvalidState("initial states produce vacuum")

    def fun(p):
        fl, _ = _pressure_fn(p, rho_l, p_l, a_l, gamma)
        fr, _ = _pressure_fn(p, rho_r, p_r, a_r, gamma)
        return fl + fr + (u_r - u_l)

    hi = max(p_l, p_r)
    while fun(hi) < 0.0:
        hi *= 4.0
    p_star = brentq(fun, 1e-14, hi, xtol=1e-14, rtol=8.9e-16)
    fl, _ = _pressure_fn(p_star, rho_l, p_l, a_l, gamma)
    fr, _ = _pressure_fn(p_star, rho_r, p_r, a_r, gamma)
    u_star = 0.5 * (u_l + u_r) + 0.5 * (fr - fl)
    return p_star, u_star


def exact_riemann(left, right, xi, gamma=GAMMA_DEFAULT):
    """Exact 1D Riemann solution sampled at similarity points xi = x/t.

    left/right: (rho, u, p) triples.  Returns an (m,3) array of
    (rho, u, p).  Raises InvalidState when the data produce vacuum.
    """
    rho_l, u_l, p_l = (float(v) for v in left)
    rho_r, u_r, p_r = (float(v) for v in right)
    a_l = np.sqrt(gamma * p_l / rho_l)
    a_r = np.sqrt(gamma * p_r / rho_r)
    p_star, u_star = riemann_star(left, right, gamma)

    gm, gp = gamma - 1.0, gamma + 1.0
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    out = np.empty((len(xi), 3))
    for i, s in enumerate(xi):
        if s <= u_star:   # left of contact
            rho_k, u_k, p_k, a_k, sgn = rho_l, u_l, p_l, a_l, 1.0
        else:
            rho_k, u_k, p_k, a_k, sgn = rho_r, u_r, p_r, a_r, -1.0
        pr = p_star / p_k
        if p_star > p_k:  # shock on this side
            rho_s = rho_k * (pr + gm / gp) / (gm / gp * pr + 1.0)
            speed = u_k - sgn * a_k * np.sqrt(gp / (2 * gamma) * pr
                                              + gm / (2 * gamma))
            inside = (s - speed) * sgn >= 0.0
            out[i] = (rho_s, u_star, p_star) if inside else (rho_k, u_k, p_k)
        else:             # rarefaction fan
            rho_s = rho_k * pr ** (1.0 / gamma)
            a_s = a_k * pr ** (gm / (2 * gamma))
            head = u_k - sgn * a_k
            tail = u_star - sgn * a_s
            if (s - head) * sgn < 0.0:
                out[i] = (rho_k, u_k, p_k)
            elif (s - tail) * sgn >= 0.0:
                out[i] = (rho_s, u_star, p_star)
            else:
                u_f = (2.0 / gp) * (sgn * a_k + gm / 2.0 * u_k + s)
                a_f = sgn * (u_f - s)
                rho_f = rho_k * (a_f / a_k) ** (2.0 / gm)
                out[i] = (rho_f, u_f, p_k * (a_f / a_k) ** (2.0 * gamma / gm))
    return out


# -- error norms --------------------------------------------------------------

def error_norms(numerical, exact, vol):
    """Volume-weighted L1/L2/Linf of (numerical - exact) per component."""
    e = np.abs(np.asarray(numerical) - np.asarray(exact))
    if e.ndim == 1:
        e = e[:, None]
    v = np.asarray(vol, dtype=float)
    vt = v.sum()
    l1 = (v[:, None] * e).sum(0) / vt
    l2 = np.sqrt((v[:, None] * e ** 2).sum(0) / vt)
    linf = e.max(0)
    return {"l1": l1, "l2": l2, "linf": linf}


def observed_order(err_coarse, err_fine, ratio=2.0):
    """Convergence order from an error pair at mesh-size ratio ``ratio``."""
    return float(np.log(err_coarse / err_fine) / np.log(ratio))
