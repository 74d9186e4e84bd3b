"""Reconstruction operators: fit exactness, blending, gradients."""
import numpy as np
import pytest

from kineticfv.mesh import generate_box_hex, generate_box_tet6
from kineticfv.reconstruction import Reconstruction, GaussGradient, MON


def _quadratic(rng):
    a = rng.normal()
    b = rng.normal(size=3)
    G = rng.normal(size=(3, 3))
    G = 0.5 * (G + G.T)

    def f(x):
        return a + x @ b + np.einsum("ni,ij,nj->n", x, G, x)

    return f, a, b, G


def _cell_averages(mesh, f, G=None):
    """Exact averages on interior + ghost cells for (at most) quadratic f."""
    q = f(mesh.centroid)
    if G is not None:
        # m2 rows pack xx, yy, zz, xy, xz, yz central moments
        s = mesh.m2
        q = q + (G[0, 0] * s[:, 0] + G[1, 1] * s[:, 1] + G[2, 2] * s[:, 2]
                 + 2 * (G[0, 1] * s[:, 3] + G[0, 2] * s[:, 4]
                        + G[1, 2] * s[:, 5]))
    return q[:, None]


def _average_gradients(mesh, b, G=None):
    g = np.broadcast_to(b, (mesh.n_total, 3)).copy()
    if G is not None:
        g = g + 2.0 * mesh.centroid @ G
    return g[:, :, None]


def _wall_mesh_hex(n=4):
    xs = np.linspace(0.0, 1.0, n + 1)
    return generate_box_hex(xs, xs, xs)


def _wall_mesh_tet(n=3):
    xs = np.linspace(0.0, 1.0, n + 1)
    return generate_box_tet6(xs, xs, xs)


class TestFitExactness:
    @pytest.mark.parametrize("maker", [_wall_mesh_hex, _wall_mesh_tet])
    def test_weno_big_fit_reproduces_quadratics(self, maker):
        mesh = maker()
        rng = np.random.default_rng(3)
        f, a, b, G = _quadratic(rng)
        recon = Reconstruction(mesh, "weno", linear=True)
        q = _cell_averages(mesh, f, G)
        coeffs = recon.reconstruct(q)
        valL, valR, gradL, gradR = recon.face_values(q, coeffs)
        pts = recon.qp_points
        exact = f(pts.reshape(-1, 3)).reshape(pts.shape[:2])
        full = recon.stencils.degree == 2
        ok_faces = full[mesh.f_owner]
        assert np.abs(valL[ok_faces, :, 0] - exact[ok_faces]).max() < 1e-10

    @pytest.mark.parametrize("maker", [_wall_mesh_hex, _wall_mesh_tet])
    def test_hweno_p0_reproduces_quadratics(self, maker):
        mesh = maker()
        rng = np.random.default_rng(4)
        f, a, b, G = _quadratic(rng)
        recon = Reconstruction(mesh, "hweno", linear=True)
        q = _cell_averages(mesh, f, G)
        grad = _average_gradients(mesh, b, G)
        coeffs = recon.reconstruct(q, grad)
        valL, _, gradL, _ = recon.face_values(q, coeffs)
        pts = recon.qp_points
        exact = f(pts.reshape(-1, 3)).reshape(pts.shape[:2])
        assert np.abs(valL[:, :, 0] - exact).max() < 1e-10
        # gradient of the quadratic is linear; check x-derivative at points
        gx = b[0] + 2.0 * (pts.reshape(-1, 3) @ G)[:, 0].reshape(pts.shape[:2])
        assert np.abs(gradL[:, :, 0, 0] - gx).max() < 1e-9

    def test_blended_linear_fields_survive(self):
        # every candidate reproduces a linear field, so any convex blend does
        mesh = _wall_mesh_tet()
        rng = np.random.default_rng(5)
        b = rng.normal(size=3)
        f = lambda x: 1.0 + x @ b
        for flavor in ("weno", "hweno"):
            recon = Reconstruction(mesh, flavor)
            q = _cell_averages(mesh, f, None)
            grad = _average_gradients(mesh, b) if recon.needs_gradients else None
            coeffs = recon.reconstruct(q, grad)
            valL, valR, _, _ = recon.face_values(q, coeffs)
            pts = recon.qp_points
            exact = f(pts.reshape(-1, 3)).reshape(pts.shape[:2])
            assert np.abs(valL[:, :, 0] - exact).max() < 1e-11, flavor

    def test_uniform_field_gives_zero_coefficients(self):
        mesh = _wall_mesh_hex(3)
        for flavor in ("weno", "hweno"):
            recon = Reconstruction(mesh, flavor)
            q = np.full((mesh.n_total, 1), 2.5)
            grad = np.zeros((mesh.n_total, 3, 1)) if recon.needs_gradients else None
            coeffs = recon.reconstruct(q, grad)
            assert np.abs(coeffs).max() < 1e-13, flavor


class TestBlend:
    def test_normalized_weights_reproduce_shared_linear_part(self):
        # when every sub-candidate equals the big fit's linear part and the
        # quadratic part is zero, the combination must return it exactly for
        # ANY smoothness values: this is the weight-normalization identity
        mesh = _wall_mesh_hex(3)
        recon = Reconstruction(mesh, "weno")
        rng = np.random.default_rng(11)
        n = mesh.n_cells
        c_big = np.zeros((n, len(MON), 2))
        c_big[:, :3] = rng.normal(size=(n, 3, 2))
        M = recon.max_subs
        mask = np.ones((n, M), dtype=bool)
        c_sub = np.broadcast_to(c_big[:, None, :3], (n, M, 3, 2)).copy()
        # perturb the implied smoothness by scaling one candidate's copy
        out = recon._blend(c_big, c_sub, mask)
        assert np.abs(out - c_big).max() < 1e-12

    def test_discontinuity_does_not_leak_across_sub_stencils(self):
        # step function: the blended value on the smooth side must stay
        # within the data range (no Gibbs blow-up through the big fit)
        n = 8
        xs = np.linspace(0.0, 1.0, n + 1)
        mesh = generate_box_hex(xs, xs, xs)
        q = np.where(mesh.centroid[:, 0] < 0.5, 1.0, 0.1)[:, None]
        recon = Reconstruction(mesh, "weno")
        coeffs = recon.reconstruct(q)
        valL, valR, _, _ = recon.face_values(q, coeffs)
        assert valL.min() > -0.2
        assert valL.max() < 1.4


class TestConvergence:
    @staticmethod
    def _interface_slope(linear, ns):
        f = lambda x: (np.sin(2 * np.pi * x[:, 0]) + np.cos(2 * np.pi * x[:, 1])
                       + np.sin(2 * np.pi * x[:, 2]))
        errs = []
        for n in ns:
            xs = np.linspace(0.0, 1.0, n + 1)
            mesh = generate_box_hex(xs, xs, xs, periodic=(True, True, True))
            recon = Reconstruction(mesh, "weno", linear=linear)
            q = np.zeros((mesh.n_total, 1))
            q[:mesh.n_cells] = mesh.cell_average(f)[:, None]
            coeffs = recon.reconstruct(q)
            valL, _, _, _ = recon.face_values(q, coeffs)
            pts = recon.qp_points
            exact = f(pts.reshape(-1, 3)).reshape(pts.shape[:2])
            errs.append(np.abs(valL[:, :, 0] - exact).mean())
        return np.log2(errs[0] / errs[1])

    def test_linear_weights_interface_error_is_third_order(self):
        assert self._interface_slope(True, (6, 12)) > 2.7

    def test_z_weighted_interface_error_converges(self):
        assert self._interface_slope(False, (6, 12)) > 2.2


class TestGaussGradient:
    def test_exact_for_linear_interface_data(self):
        mesh = _wall_mesh_tet(3)
        gg = GaussGradient(mesh)
        b = np.array([0.3, -1.1, 0.7])
        vals = (gg.points @ b)[:, None] + 2.0
        grad = gg(vals)
        assert np.abs(grad[:mesh.n_cells, :, 0] - b).max() < 1e-12

    def test_uniform_data_gives_zero(self):
        mesh = _wall_mesh_hex(3)
        gg = GaussGradient(mesh)
        grad = gg(np.full((len(gg.points), 2), 3.0))
        assert np.abs(grad).max() < 1e-13


class TestPositivityFallback:
    def test_bad_faces_are_demoted_to_averages(self):
        mesh = _wall_mesh_hex(3)
        recon = Reconstruction(mesh, "weno")
        rng = np.random.default_rng(7)
        q = 1.0 + 0.1 * rng.normal(size=(mesh.n_total, 1))
        coeffs = recon.reconstruct(q)
        valL, valR, gradL, gradR = recon.face_values(q, coeffs)
        valid = np.ones(len(mesh.f_owner), dtype=bool)
        valid[[0, 5]] = False
        ndem = recon.apply_positivity_fallback(q, valL, valR, gradL, gradR, valid)
        assert ndem == 2
        assert np.allclose(valL[0], q[mesh.f_owner[0], 0])
        assert np.allclose(valR[5], q[mesh.f_neigh[5], 0])
        assert np.abs(gradL[0]).max() == 0.0
