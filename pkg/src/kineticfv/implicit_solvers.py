"""Increment solvers for the dual-time stage systems.

Both solve [alpha I - sigma dL/dQ] dQ = rhs on the interior cells, with
the flux divergence linearized through one of two face couplings:

* LUSGS: Euler flux splitting dF = 1/2 (dT_ip + dT_i - lam (dQ_ip - dQ_i)),
  where dT is the actual flux difference at the incremented state
  (matrix-free), swept forward then backward in cell order.
* GMRES: analytic blocks dF/dQ_i = 1/2 (J(Q_i) + lam I) and
  dF/dQ_ip = 1/2 (J(Q_ip) - lam I) assembled block-sparse, restarted
  Krylov iteration with a Jacobi-preconditioned right side.

Ghost-cell increments are zero by construction, so boundary faces only
contribute their spectral radius to the diagonal.  Summed over a closed
cell the own-state flux terms cancel (sum of S*n vanishes), which makes
the diagonal exactly (alpha + sigma/(2V) sum lam S) I for both solvers.
"""
import numpy as np
import scipy.sparse as sp

from .errors import SolverDivergence
from .kinetic import GAMMA_DEFAULT, conserved_to_primitive

__all__ = ["euler_jacobian", "normal_flux", "spectral_radius",
           "IncrementSystem", "lusgs_solve", "gmres_solve"]


def normal_flux(q, n, gamma=GAMMA_DEFAULT):
    """Euler flux projected on unit normals; q (m,5), n (m,3) -> (m,5)."""
    rho = q[:, 0]
    vel = q[:, 1:4] / rho[:, None]
    p = (gamma - 1.0) * (q[:, 4] - 0.5 * (q[:, 1:4] * vel).sum(1))
    un = (vel * n).sum(1)
    out = np.empty_like(q)
    out[:, 0] = rho * un
    out[:, 1:4] = q[:, 1:4] * un[:, None] + p[:, None] * n
    out[:, 4] = (q[:, 4] + p) * un
    return out


def euler_jacobian(q, n, gamma=GAMMA_DEFAULT):
    """Analytic d(F.n)/dQ for the gamma-law gas; (m,5),(m,3) -> (m,5,5)."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = np.atleast_2d(np.asarray(n, dtype=float))
    m = len(q)
    rho = q[:, 0]
    vel = q[:, 1:4] / rho[:, None]
    ke = 0.5 * (vel ** 2).sum(1)
    p = (gamma - 1.0) * (q[:, 4] - rho * ke)
    H = (q[:, 4] + p) / rho
    un = (vel * n).sum(1)
    g1 = gamma - 1.0
    A = np.zeros((m, 5, 5))
    A[:, 0, 1:4] = n
    A[:, 1:4, 0] = g1 * ke[:, None] * n - vel * un[:, None]
    A[:, 1:4, 1:4] = (vel[:, :, None] * n[:, None, :]
                      - g1 * n[:, :, None] * vel[:, None, :]
                      + un[:, None, None] * np.eye(3)[None])
    A[:, 1:4, 4] = g1 * n
    A[:, 4, 0] = (g1 * ke - H) * un
    A[:, 4, 1:4] = H[:, None] * n - g1 * vel * un[:, None]
    A[:, 4, 4] = gamma * un
    return A


def spectral_radius(q_left, q_right, n, gamma=GAMMA_DEFAULT, mode="average"):
    """Upper bound |u.n| + a of the flux Jacobian spectrum per face."""
    if mode == "average":
        states = (0.5 * (q_left + q_right),)
    elif mode == "max":
        states = (q_left, q_right)
    else:
        raise ValueError(f"unknown spectral radius mode '{mode}'")
    lam = None
    for q in states:
        rho, U, V, W, p = conserved_to_primitive(q, gamma)
        a = np.sqrt(gamma * p / rho)
        vn = np.abs(U * n[:, 0] + V * n[:, 1] + W * n[:, 2])
        lam = vn + a if lam is None else np.maximum(lam, vn + a)
    return lam


def _cell_face_table(mesh):
    """CSR-style per-cell face list with orientation signs, cached."""
    cached = getattr(mesh, "_cf_table", None)
    if cached is not None:
        return cached
    n = mesh.n_cells
    nf = len(mesh.f_owner)
    count = np.zeros(n, dtype=np.int64)
    np.add.at(count, mesh.f_owner, 1)
    ngh_int = mesh.f_neigh < n
    np.add.at(count, mesh.f_neigh[ngh_int], 1)
    ptr = np.concatenate([[0], np.cumsum(count)])
    faces = np.empty(ptr[-1], dtype=np.int64)
    signs = np.empty(ptr[-1], dtype=np.int8)
    cur = ptr[:-1].copy()
    for fid in range(nf):
        o = mesh.f_owner[fid]
        faces[cur[o]] = fid
        signs[cur[o]] = 1
        cur[o] += 1
        g = mesh.f_neigh[fid]
        if g < n:
            faces[cur[g]] = fid
            signs[cur[g]] = -1
            cur[g] += 1
    mesh._cf_table = (ptr, faces, signs)
    return mesh._cf_table


def _sweep_levels(mesh, forward):
    """Group cells into dependency levels of a Gauss-Seidel sweep in cell
    order: within a level no two cells share a face, so the vectorized
    update reproduces the sequential sweep exactly."""
    attr = "_lusgs_levels_fwd" if forward else "_lusgs_levels_bwd"
    cached = getattr(mesh, attr, None)
    if cached is not None:
        return cached
    n = mesh.n_cells
    ptr, faces, signs = _cell_face_table(mesh)
    other = np.where(signs > 0, mesh.f_neigh[faces], mesh.f_owner[faces])
    order = range(n) if forward else range(n - 1, -1, -1)
    level = np.zeros(n, dtype=np.int64)
    for i in order:
        nbrs = other[ptr[i]:ptr[i + 1]]
        nbrs = nbrs[nbrs < n]
        done = nbrs < i if forward else nbrs > i
        if done.any():
            level[i] = level[nbrs[done]].max() + 1
    groups = [np.flatnonzero(level == l) for l in range(level.max() + 1)]
    setattr(mesh, attr, groups)
    return groups


class IncrementSystem:
    """One stage system [alpha I - sigma dL/dQ] dQ = rhs at state q.

    q holds the current pseudo-iterate including filled ghosts; rhs is
    (n_cells, 5).  lam_mode selects the face spectral-radius evaluation.
    """

    def __init__(self, mesh, q, alpha, sigma, rhs, gamma=GAMMA_DEFAULT,
                 lam_mode="average"):
        self.mesh = mesh
        self.q = q
        self.alpha = float(alpha)
        self.sigma = float(sigma)
        self.rhs = rhs
        self.gamma = float(gamma)
        self.lam = spectral_radius(q[mesh.f_owner], q[mesh.f_neigh],
                                   mesh.f_normal, gamma, lam_mode)
        lam_s = self.lam * mesh.f_area
        diag = np.zeros(mesh.n_cells)
        np.add.at(diag, mesh.f_owner, lam_s)
        ngh_int = mesh.f_neigh < mesh.n_cells
        np.add.at(diag, mesh.f_neigh[ngh_int], lam_s[ngh_int])
        self.diag = self.alpha + self.sigma * diag / (2.0 * mesh.vol[:mesh.n_cells])

    # -- assembled operator (GMRES path) ---------------------------------

    def operator(self):
        """Block-sparse A (5n x 5n) with scalar diagonal blocks."""
        mesh = self.mesh
        n = mesh.n_cells
        ngh_int = mesh.f_neigh < n
        f = np.flatnonzero(ngh_int)
        own, ngh = mesh.f_owner[f], mesh.f_neigh[f]
        area, lam = mesh.f_area[f], self.lam[f]
        nrm = mesh.f_normal[f]
        J_own = euler_jacobian(self.q[own], nrm, self.gamma)
        J_ngh = euler_jacobian(self.q[ngh], nrm, self.gamma)
        eye = np.eye(5)[None]
        # row owner, col neighbor: outward normal +n
        c_own = area / (2.0 * mesh.vol[own]) * self.sigma
        b_og = c_own[:, None, None] * (J_ngh - lam[:, None, None] * eye)
        # row neighbor, col owner: outward normal -n flips J's sign
        c_ngh = area / (2.0 * mesh.vol[ngh]) * self.sigma
        b_go = c_ngh[:, None, None] * (-J_own - lam[:, None, None] * eye)
        rows = np.concatenate([np.arange(n), own, ngh])
        cols = np.concatenate([np.arange(n), ngh, own])
        blocks = np.concatenate([self.diag[:, None, None] * eye,
                                 b_og, b_go])
        order = np.lexsort((cols, rows))
        indptr = np.searchsorted(rows[order], np.arange(n + 1))
        return sp.bsr_array((blocks[order], cols[order], indptr),
                            shape=(5 * n, 5 * n))


def lusgs_solve(system, sweeps=1):
    """Symmetric Gauss-Seidel sweeps over the flux-split system.

    sweeps counts forward+backward pairs; the default single pair is the
    classical LU-SGS pass (zero initial increment).  Returns dQ (n,5).
    """
    mesh = system.mesh
    n = mesh.n_cells
    ptr, faces, signs = _cell_face_table(mesh)
    fwd = _sweep_levels(mesh, True)
    bwd = _sweep_levels(mesh, False)
    q = system.q
    gam = system.gamma
    area = mesh.f_area
    nrm = mesh.f_normal
    dq = np.zeros((n, 5))

    f_own = mesh.f_owner[faces]
    f_ngh = mesh.f_neigh[faces]
    other = np.where(signs > 0, f_ngh, f_own)
    interior = other < n
    g_safe = np.where(interior, other, 0)
    base_flux = np.zeros((len(faces), 5))
    idx_int = np.flatnonzero(interior)
    n_out_int = nrm[faces[idx_int]] * signs[idx_int, None]
    base_flux[idx_int] = normal_flux(q[other[idx_int]], n_out_int, gam)

    def relax_level(cells):
        # vectorized over one independence level
        sl_ptr = ptr[cells]
        counts = ptr[cells + 1] - sl_ptr
        width = counts.max()
        rows = sl_ptr[:, None] + np.arange(width)[None, :]
        valid = np.arange(width)[None, :] < counts[:, None]
        rows = np.where(valid, rows, 0)
        sel = interior[rows] & valid
        fr = faces[rows]
        g = g_safe[rows]
        n_o = nrm[fr] * signs[rows][:, :, None]
        dT = (normal_flux((q[g] + dq[g] * sel[:, :, None]).reshape(-1, 5),
                          n_o.reshape(-1, 3), gam).reshape(len(cells), -1, 5)
              - base_flux[rows])
        lam = system.lam[fr]
        contrib = (area[fr] * sel)[:, :, None] * (
            dT - lam[:, :, None] * dq[g])
        acc = np.where(sel[:, :, None], contrib, 0.0).sum(1)
        dq[cells] = (system.rhs[cells] - 0.5 * system.sigma
                     * acc / mesh.vol[cells, None]) / system.diag[cells, None]

    for _ in range(int(sweeps)):
        for cells in fwd:
            relax_level(cells)
        for cells in bwd:
            relax_level(cells)
    bad = ~np.isfinite(dq).all(axis=1)
    if bad.any():
        raise SolverDivergence(
            f"LUSGS increment not finite at cell {int(np.flatnonzero(bad)[0])}")
    return dq


def gmres_solve(system, dim_k=3, restarts=1, tol=1e-6, jacobi_sweeps=2):
    """Restarted GMRES with right block-Jacobi preconditioning.

    Returns (dQ, info) where info carries relres / iterations /
    converged / breakdown.
    """
    mesh = system.mesh
    n = mesh.n_cells
    A = system.operator()
    b = system.rhs.reshape(-1)
    dinv = np.repeat(1.0 / system.diag, 5)

    def precond(r):
        z = dinv * r
        for _ in range(int(jacobi_sweeps) - 1):
            z = z + dinv * (r - A @ z)
        return z

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(system.rhs), {"relres": 0.0, "iterations": 0,
                                           "converged": True,
                                           "breakdown": False}
    x = np.zeros_like(b)
    info = {"breakdown": False, "iterations": 0}
    relres = 1.0
    for _ in range(max(1, int(restarts))):
        r = b - A @ x
        beta = np.linalg.norm(r)
        relres = beta / bnorm
        if relres < tol:
            break
        m = int(dim_k)
        V = np.zeros((m + 1, len(b)))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / beta
        g[0] = beta
        k_used = 0
        for j in range(m):
            w = A @ precond(V[j])
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            hnorm = np.linalg.norm(w)
            H[j + 1, j] = hnorm
            info["iterations"] += 1
            if hnorm <= 1e-14 * bnorm:
                info["breakdown"] = True
            else:
                V[j + 1] = w / hnorm
            # apply accumulated Givens rotations, then form the new one
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                # column adds nothing the previous ones did not span
                info["breakdown"] = True
                k_used = j
                break
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k_used = j + 1
            relres = abs(g[j + 1]) / bnorm
            if relres < tol or info["breakdown"]:
                break
        if k_used:
            y = np.zeros(k_used)
            for i in range(k_used - 1, -1, -1):
                y[i] = (g[i] - H[i, i + 1:k_used] @ y[i + 1:k_used]) / H[i, i]
            x = x + precond(V[:k_used].T @ y)
        if relres < tol or info["breakdown"]:
            break
    if not np.isfinite(x).all():
        bad = int(np.flatnonzero(~np.isfinite(x))[0] // 5)
        raise SolverDivergence(f"GMRES increment not finite at cell {bad}")
    info["relres"] = float(relres)
    info["converged"] = bool(relres < tol)
    return x.reshape(n, 5), info
