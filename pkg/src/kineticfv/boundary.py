"""Boundary conditions via mirror-ghost states.

Each condition is a local transform: given the interior state seen at a
boundary (a cell average or a reconstructed face value) and the outward
unit normal, it produces the state the ghost side must carry so that the
interface flux realizes the physical condition.  All transforms work on
primitive variables (rho, U, V, W, p); callers hold conserved data, so
the set converts on the fly.

Average gradients (the compact-flavor Hermite data) are transformed per
field with the Householder reflection H = I - 2 n n^T of the derivative
index: even fields keep their sign, the momentum vector flips and, for a
moving wall, picks up the lid-speed times the density gradient.
"""
import numpy as np

from .errors import ConfigError
from .kinetic import GAMMA_DEFAULT

__all__ = [
    "BoundaryCondition", "NonReflecting", "Symmetry", "NoSlipAdiabatic",
    "NoSlipIsothermal", "make_condition", "BoundarySet",
]


def _prim_raw(q, gamma):
    """Tolerant conserved -> primitive; never raises (rows may be junk
    for invalid states, which the positivity fallback later demotes)."""
    rho = q[:, 0]
    safe = np.where(np.abs(rho) > 1e-300, rho, 1e-300)
    u = q[:, 1:4] / safe[:, None]
    p = (gamma - 1.0) * (q[:, 4] - 0.5 * (q[:, 1:4] * u).sum(1))
    out = np.empty_like(q)
    out[:, 0] = rho
    out[:, 1:4] = u
    out[:, 4] = p
    return out


def _cons_raw(w, gamma):
    out = np.empty_like(w)
    out[:, 0] = w[:, 0]
    out[:, 1:4] = w[:, 0, None] * w[:, 1:4]
    out[:, 4] = w[:, 4] / (gamma - 1.0) + 0.5 * w[:, 0] * (w[:, 1:4] ** 2).sum(1)
    return out


def _householder(n):
    return np.eye(3)[None] - 2.0 * n[:, :, None] * n[:, None, :]


class BoundaryCondition:
    kind = "base"

    def ghost_prim(self, w, n):
        """(m,5) interior primitive, (m,3) outward normals -> ghost primitive."""
        raise NotImplementedError

    def ghost_grad(self, g, w, n):
        """(m,3,5) conserved-variable gradients -> ghost gradients."""
        raise NotImplementedError


class NonReflecting(BoundaryCondition):
    """Zero-order pass-through: the ghost repeats the interior state, so
    the interface flux is one-sided and waves leave without reflection."""
    kind = "non_reflecting"

    def ghost_prim(self, w, n):
        return w.copy()

    def ghost_grad(self, g, w, n):
        return g.copy()


class Symmetry(BoundaryCondition):
    kind = "symmetry"

    def ghost_prim(self, w, n):
        out = w.copy()
        un = (w[:, 1:4] * n).sum(1)
        out[:, 1:4] -= 2.0 * un[:, None] * n
        return out

    def ghost_grad(self, g, w, n):
        H = _householder(n)
        out = np.einsum("mij,mjc->mic", H, g)
        # momentum components rotate as a vector as well
        out[:, :, 1:4] = np.einsum("mic,mkc->mik", out[:, :, 1:4], H)
        return out


class NoSlipAdiabatic(BoundaryCondition):
    """Velocity reverses, density and pressure mirror: zero wall slip and
    zero normal temperature gradient."""
    kind = "no_slip_adiabatic"

    def ghost_prim(self, w, n):
        out = w.copy()
        out[:, 1:4] = -w[:, 1:4]
        return out

    def ghost_grad(self, g, w, n):
        H = _householder(n)
        out = np.einsum("mij,mjc->mic", H, g)
        out[:, :, 1:4] = -out[:, :, 1:4]
        return out


class NoSlipIsothermal(BoundaryCondition):
    """Fixed-temperature wall, optionally translating (lid).

    The ghost temperature is extrapolated through the wall value and
    clipped away from zero; velocity reflects through the wall speed.
    """
    kind = "no_slip_isothermal"

    def __init__(self, t_wall, u_wall=(0.0, 0.0, 0.0), t_floor=0.05):
        if t_wall <= 0.0:
            raise ConfigError(f"wall temperature must be positive, got {t_wall}")
        self.t_wall = float(t_wall)
        self.u_wall = np.asarray(u_wall, dtype=float)
        self.t_floor = float(t_floor)

    def ghost_prim(self, w, n):
        out = w.copy()
        out[:, 1:4] = 2.0 * self.u_wall - w[:, 1:4]
        t_int = w[:, 4] / np.maximum(w[:, 0], 1e-300)
        t_g = np.maximum(2.0 * self.t_wall - t_int, self.t_floor * self.t_wall)
        out[:, 0] = w[:, 4] / t_g  # pressure continuous across the wall
        return out

    def ghost_grad(self, g, w, n):
        H = _householder(n)
        out = np.einsum("mij,mjc->mic", H, g)
        out[:, :, 1:4] = (2.0 * out[:, :, 0, None] * self.u_wall[None, None]
                          - out[:, :, 1:4])
        return out


_KINDS = {
    "non_reflecting": NonReflecting,
    "symmetry": Symmetry,
    "no_slip_adiabatic": NoSlipAdiabatic,
    "no_slip_isothermal": NoSlipIsothermal,
}


def make_condition(kind, **params):
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ConfigError(f"unknown boundary kind '{kind}'") from None
    return cls(**params)


class BoundarySet:
    """Wires one condition per mesh patch and applies them in bulk.

    conditions: {patch_name: BoundaryCondition}.  Every named patch of the
    mesh that still owns boundary faces must be covered.
    """

    def __init__(self, mesh, conditions, gamma=GAMMA_DEFAULT):
        self.mesh = mesh
        self.gamma = float(gamma)
        open_patches = {mesh.patch_names[p]
                        for p in np.unique(mesh.f_patch[mesh.f_patch >= 0])}
        missing = open_patches - set(conditions)
        if missing:
            raise ConfigError("no boundary condition for patch(es): "
                              + ", ".join(sorted(missing)))
        self.groups = []
        for name, cond in conditions.items():
            if name not in mesh.patch_names:
                raise ConfigError(f"unknown patch '{name}'")
            faces = mesh.patch_faces(name)
            if len(faces) == 0:
                continue
            self.groups.append((cond, faces,
                                mesh.f_owner[faces], mesh.f_neigh[faces],
                                mesh.f_normal[faces]))

    def fill_ghost_averages(self, q):
        """Write ghost rows of the conserved average array in place."""
        for cond, faces, donor, ghost, n in self.groups:
            w = _prim_raw(q[donor], self.gamma)
            q[ghost] = _cons_raw(cond.ghost_prim(w, n), self.gamma)

    def fill_ghost_gradients(self, grad, q):
        """Write ghost rows of the (n_total,3,5) conserved-gradient array."""
        for cond, faces, donor, ghost, n in self.groups:
            w = _prim_raw(q[donor], self.gamma)
            grad[ghost] = cond.ghost_grad(grad[donor], w, n)

    def override_face_data(self, valL, valR, gradL, gradR):
        """Replace the ghost side of boundary faces by the transformed
        interior side, pointwise over the (padded) quadrature slots."""
        for cond, faces, donor, ghost, n in self.groups:
            m, ng = len(faces), valL.shape[1]
            vi = valL[faces].reshape(m * ng, 5)
            gi = gradL[faces].reshape(m * ng, 3, 5)
            nn = np.repeat(n, ng, axis=0)
            w = _prim_raw(vi, self.gamma)
            valR[faces] = _cons_raw(cond.ghost_prim(w, nn),
                                    self.gamma).reshape(m, ng, 5)
            gradR[faces] = cond.ghost_grad(gi, w, nn).reshape(m, ng, 3, 5)
