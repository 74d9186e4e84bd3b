"""Jacobians, spectral radii, and the two increment solvers."""
import numpy as np
import pytest

from kineticfv.errors import SolverDivergence
from kineticfv.implicit_solvers import (IncrementSystem, euler_jacobian,
                                        gmres_solve, lusgs_solve,
                                        normal_flux, spectral_radius)
from kineticfv.kinetic import conserved_to_primitive, primitive_to_conserved
from kineticfv.mesh import generate_box_hex, generate_box_tet6

GAMMA = 1.4


def _random_states(rng, m):
    rho = rng.uniform(0.4, 2.0, m)
    vel = rng.uniform(-0.8, 0.8, (m, 3))
    p = rng.uniform(0.3, 2.5, m)
    return primitive_to_conserved(rho, vel[:, 0], vel[:, 1], vel[:, 2], p)


def _random_normals(rng, m):
    n = rng.normal(size=(m, 3))
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def _smooth_state(mesh, amp=0.1):
    x, y, z = mesh.centroid[:mesh.n_cells].T
    rho = 1.0 + amp * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    u = amp * np.sin(2 * np.pi * y)
    v = amp * np.cos(2 * np.pi * z)
    w = np.zeros_like(u)
    p = 1.0 + amp * np.cos(2 * np.pi * x)
    q = np.zeros((mesh.n_total, 5))
    q[:mesh.n_cells] = primitive_to_conserved(rho, u, v, w, p)
    if mesh.n_total > mesh.n_cells:
        q[mesh.n_cells:] = q[mesh.ghost_donor]
    return q


class TestJacobian:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        q = _random_states(rng, 40)
        n = _random_normals(rng, 40)
        J = euler_jacobian(q, n)
        eps = 1e-7
        for c in range(5):
            dq = np.zeros_like(q)
            dq[:, c] = eps * np.maximum(1.0, np.abs(q[:, c]))
            fd = (normal_flux(q + dq, n) - normal_flux(q - dq, n)) / (2 * dq[:, c:c + 1])
            scale = np.abs(fd).max() + 1.0
            assert np.abs(J[:, :, c] - fd).max() / scale < 1e-6

    def test_eigenvalues_bounded_by_wave_speeds(self):
        rng = np.random.default_rng(6)
        q = _random_states(rng, 25)
        n = _random_normals(rng, 25)
        J = euler_jacobian(q, n)
        rho, U, V, W, p = conserved_to_primitive(q, GAMMA)
        a = np.sqrt(GAMMA * p / rho)
        un = U * n[:, 0] + V * n[:, 1] + W * n[:, 2]
        for k in range(25):
            ev = np.linalg.eigvals(J[k])
            assert np.abs(ev.imag).max() < 1e-8
            assert ev.real.min() > un[k] - a[k] - 1e-8
            assert ev.real.max() < un[k] + a[k] + 1e-8
            # the acoustic extremes are attained
            assert np.isclose(ev.real.max(), un[k] + a[k], atol=1e-8)
            assert np.isclose(ev.real.min(), un[k] - a[k], atol=1e-8)

    def test_linearity_in_normal(self):
        rng = np.random.default_rng(7)
        q = _random_states(rng, 10)
        n = _random_normals(rng, 10)
        J_pos = euler_jacobian(q, n)
        J_neg = euler_jacobian(q, -n)
        assert np.allclose(J_pos, -J_neg, atol=1e-13)

    def test_normal_flux_projects_axis_flux(self):
        from kineticfv.kinetic import euler_flux
        rng = np.random.default_rng(8)
        q = _random_states(rng, 12)
        n = np.tile([1.0, 0.0, 0.0], (12, 1))
        assert np.allclose(normal_flux(q, n), euler_flux(q), atol=1e-13)


class TestSpectralRadius:
    def test_equal_states(self):
        q = primitive_to_conserved(np.array([1.0]), np.array([0.5]),
                                   np.array([0.2]), np.array([0.0]),
                                   np.array([1.0]))
        n = np.array([[0.0, 1.0, 0.0]])
        lam = spectral_radius(q, q, n)
        assert np.isclose(lam[0], 0.2 + np.sqrt(1.4))

    def test_max_mode_dominates_average(self):
        rng = np.random.default_rng(9)
        ql = _random_states(rng, 30)
        qr = _random_states(rng, 30)
        n = _random_normals(rng, 30)
        avg = spectral_radius(ql, qr, n, mode="average")
        mx = spectral_radius(ql, qr, n, mode="max")
        one_sided = np.minimum(spectral_radius(ql, ql, n),
                               spectral_radius(qr, qr, n))
        assert (mx >= one_sided - 1e-13).all()

    def test_unknown_mode_rejected(self):
        q = _random_states(np.random.default_rng(0), 1)
        with pytest.raises(ValueError):
            spectral_radius(q, q, np.array([[1.0, 0, 0]]), mode="upwind")


def _make_system(mesh, alpha=5.0, sigma=0.5, seed=3, amp=0.1, rhs_amp=1e-2):
    rng = np.random.default_rng(seed)
    q = _smooth_state(mesh, amp)
    rhs = rhs_amp * rng.normal(size=(mesh.n_cells, 5))
    return IncrementSystem(mesh, q, alpha, sigma, rhs)


def _lusgs_sequential(system, sweeps=1):
    """Plain-loop symmetric Gauss-Seidel in cell order (oracle)."""
    mesh = system.mesh
    n = mesh.n_cells
    cf = [[] for _ in range(n)]
    for fid in range(len(mesh.f_owner)):
        o, g = mesh.f_owner[fid], mesh.f_neigh[fid]
        cf[o].append((fid, 1.0))
        if g < n:
            cf[g].append((fid, -1.0))
    dq = np.zeros((n, 5))
    for _ in range(sweeps):
        for order in (range(n), range(n - 1, -1, -1)):
            for i in order:
                acc = np.zeros(5)
                for fid, s in cf[i]:
                    g = mesh.f_neigh[fid] if s > 0 else mesh.f_owner[fid]
                    if g >= n:
                        continue
                    n_out = (s * mesh.f_normal[fid])[None]
                    dT = (normal_flux(system.q[g][None] + dq[g][None], n_out,
                                      system.gamma)
                          - normal_flux(system.q[g][None], n_out,
                                        system.gamma))[0]
                    acc += mesh.f_area[fid] * (dT - system.lam[fid] * dq[g])
                dq[i] = ((system.rhs[i] - 0.5 * system.sigma * acc / mesh.vol[i])
                         / system.diag[i])
    return dq


def _split_residual(system, dq):
    """Residual of the nonlinear split system the sweeps relax."""
    mesh = system.mesh
    n = mesh.n_cells
    res = system.diag[:, None] * dq - system.rhs
    for fid in range(len(mesh.f_owner)):
        o, g = mesh.f_owner[fid], mesh.f_neigh[fid]
        if g >= n:
            continue
        nrm = mesh.f_normal[fid][None]
        for row, col, n_out in ((o, g, nrm), (g, o, -nrm)):
            dT = (normal_flux(system.q[col][None] + dq[col][None], n_out,
                              system.gamma)
                  - normal_flux(system.q[col][None], n_out, system.gamma))[0]
            res[row] += (0.5 * system.sigma * mesh.f_area[fid]
                         * (dT - system.lam[fid] * dq[col]) / mesh.vol[row])
    return res


class TestLUSGS:
    @pytest.mark.parametrize("make_mesh", [
        lambda: generate_box_hex(np.linspace(0, 1, 4), np.linspace(0, 1, 4),
                                 np.linspace(0, 1, 4), periodic=(True,) * 3),
        lambda: generate_box_tet6(np.linspace(0, 1, 3), np.linspace(0, 1, 3),
                                  np.linspace(0, 1, 3)),
    ])
    def test_matches_sequential_reference(self, make_mesh):
        mesh = make_mesh()
        system = _make_system(mesh)
        for sweeps in (1, 2):
            got = lusgs_solve(system, sweeps=sweeps)
            want = _lusgs_sequential(system, sweeps=sweeps)
            assert np.abs(got - want).max() < 1e-12

    def test_sweeps_converge_to_split_fixed_point(self):
        mesh = generate_box_hex(np.linspace(0, 1, 4), np.linspace(0, 1, 4),
                                np.linspace(0, 1, 4), periodic=(True,) * 3)
        system = _make_system(mesh, rhs_amp=1e-3)
        dq = lusgs_solve(system, sweeps=60)
        res = _split_residual(system, dq)
        assert np.abs(res).max() < 1e-10 * np.abs(system.rhs).max()

    def test_single_cell_closed_form(self):
        mesh = generate_box_hex([0.0, 1.0], [0.0, 1.0], [0.0, 1.0])
        system = _make_system(mesh, alpha=3.0, sigma=0.5, amp=0.0)
        dq = lusgs_solve(system)
        want = system.rhs / system.diag[:, None]
        assert np.allclose(dq, want, atol=1e-14)
        # diagonal carries every boundary face's spectral radius
        lam_sum = (system.lam * mesh.f_area).sum()
        assert np.isclose(system.diag[0],
                          3.0 + 0.5 * lam_sum / (2.0 * mesh.vol[0]))

    def test_nan_rhs_aborts_with_cell_id(self):
        mesh = generate_box_hex(np.linspace(0, 1, 3), np.linspace(0, 1, 3),
                                np.linspace(0, 1, 3), periodic=(True,) * 3)
        system = _make_system(mesh)
        system.rhs[4, 2] = np.nan
        with pytest.raises(SolverDivergence, match="cell"):
            lusgs_solve(system)


class TestGMRES:
    def test_matches_dense_solve(self):
        mesh = generate_box_hex(np.linspace(0, 1, 4), np.linspace(0, 1, 4),
                                np.linspace(0, 1, 4), periodic=(True,) * 3)
        system = _make_system(mesh)
        A = system.operator().toarray()
        want = np.linalg.solve(A, system.rhs.reshape(-1)).reshape(-1, 5)
        got, info = gmres_solve(system, dim_k=40, restarts=6, tol=1e-13)
        assert info["converged"]
        assert np.abs(got - want).max() < 1e-9 * np.abs(want).max()

    def test_true_residual_matches_reported(self):
        mesh = generate_box_tet6(np.linspace(0, 1, 3), np.linspace(0, 1, 3),
                                 np.linspace(0, 1, 3))
        system = _make_system(mesh, seed=11)
        dq, info = gmres_solve(system, dim_k=10, restarts=2, tol=1e-10)
        A = system.operator()
        b = system.rhs.reshape(-1)
        relres = np.linalg.norm(b - A @ dq.reshape(-1)) / np.linalg.norm(b)
        assert np.isclose(relres, info["relres"], rtol=1e-6, atol=1e-14)

    def test_block_diagonal_system_converges_in_one_iteration(self):
        mesh = generate_box_hex([0.0, 1.0], [0.0, 1.0], [0.0, 1.0])
        system = _make_system(mesh, amp=0.0)
        dq, info = gmres_solve(system, dim_k=3, tol=1e-12)
        assert info["converged"]
        assert info["iterations"] <= 1
        assert np.allclose(dq, system.rhs / system.diag[:, None], atol=1e-13)

    def test_zero_rhs_short_circuits(self):
        mesh = generate_box_hex([0.0, 1.0], [0.0, 1.0], [0.0, 1.0])
        system = _make_system(mesh, amp=0.0)
        system.rhs[:] = 0.0
        dq, info = gmres_solve(system)
        assert info["converged"] and not dq.any()

    def test_default_budget_reduces_residual(self):
        mesh = generate_box_hex(np.linspace(0, 1, 4), np.linspace(0, 1, 4),
                                np.linspace(0, 1, 4), periodic=(True,) * 3)
        system = _make_system(mesh)
        dq, info = gmres_solve(system)  # dim_k=3, one restart
        assert info["relres"] < 0.1  # strongly diagonally dominant system


class TestCrossSolverConsistency:
    def test_small_increment_limit(self):
        # tiny rhs makes the matrix-free flux difference agree with the
        # analytic linearization to second order
        mesh = generate_box_hex(np.linspace(0, 1, 5), np.linspace(0, 1, 5),
                                np.linspace(0, 1, 5), periodic=(True,) * 3)
        system = _make_system(mesh, rhs_amp=1e-5, seed=21)
        d_lu = lusgs_solve(system, sweeps=150)
        d_gm, info = gmres_solve(system, dim_k=40, restarts=8, tol=1e-13)
        assert info["converged"]
        scale = np.abs(d_gm).max()
        assert np.abs(d_lu - d_gm).max() < 1e-4 * scale
