"""Mesh geometry, connectivity, file round-trips, stencil construction."""

import io

import numpy as np
import pytest

from kineticfv import (Mesh, MeshError, MeshFormatError, build_stencils,
                       generate_box_hex, generate_box_tet6,
                       tanh_stretch_nodes, wall_refine_map)
from kineticfv.mesh import StencilSet


def unit_nodes(n):
    return np.linspace(0.0, 1.0, n + 1)


@pytest.fixture(scope="module")
def hex_mesh():
    return generate_box_hex(unit_nodes(3), unit_nodes(3), unit_nodes(3))


@pytest.fixture(scope="module")
def tet_mesh():
    return generate_box_tet6(unit_nodes(3), unit_nodes(3), unit_nodes(3))


@pytest.fixture(scope="module")
def periodic_hex():
    return generate_box_hex(unit_nodes(4), unit_nodes(3), unit_nodes(2),
                            periodic=("x", "y", "z"))


class TestGeometry:
    def test_volumes_sum_to_box(self, hex_mesh, tet_mesh):
        assert np.isclose(hex_mesh.vol[: hex_mesh.n_cells].sum(), 1.0, rtol=1e-13)
        assert np.isclose(tet_mesh.vol[: tet_mesh.n_cells].sum(), 1.0, rtol=1e-13)

    def test_surface_closure(self, hex_mesh, tet_mesh):
        assert hex_mesh.surface_closure < 1e-12
        assert tet_mesh.surface_closure < 1e-12

    def test_hex_centroids_regular(self, hex_mesh):
        # regular grid: centroids sit at cell centers
        cent = hex_mesh.centroid[: hex_mesh.n_cells]
        k = np.round(cent * 3.0 - 0.5)
        assert np.abs(cent - (k + 0.5) / 3.0).max() < 1e-14

    def test_face_areas_boundary(self, hex_mesh):
        # each of the 6 box sides is 3x3 faces of area 1/9
        nb = int(hex_mesh.f_is_boundary.sum())
        assert nb == 54
        areas = hex_mesh.f_area[hex_mesh.f_is_boundary]
        assert np.allclose(areas, 1.0 / 9.0)

    def test_second_moments_match_quadrature(self, tet_mesh):
        # averaged second central moments vs direct quadrature
        m = tet_mesh
        i = 7
        xq, wq = m.cell_quadrature(n=4)
        sel = xq[i]
        d = sel - m.centroid[i]
        ww = wq[i] / m.vol[i]
        ref = np.array([
            (ww * d[:, 0] * d[:, 0]).sum(), (ww * d[:, 1] * d[:, 1]).sum(),
            (ww * d[:, 2] * d[:, 2]).sum(), (ww * d[:, 0] * d[:, 1]).sum(),
            (ww * d[:, 0] * d[:, 2]).sum(), (ww * d[:, 1] * d[:, 2]).sum()])
        assert np.abs(m.m2[i] - ref).max() < 1e-15

    def test_cell_average_exact_for_quadratics(self, tet_mesh):
        m = tet_mesh
        rng = np.random.default_rng(3)
        c = rng.normal(size=10)

        def f(x):
            x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
            return (c[0] + c[1] * x0 + c[2] * x1 + c[3] * x2 + c[4] * x0 * x0
                    + c[5] * x1 * x1 + c[6] * x2 * x2 + c[7] * x0 * x1
                    + c[8] * x0 * x2 + c[9] * x1 * x2)

        avg = m.cell_average(f)
        d = m.centroid[: m.n_cells]
        m2 = m.m2[: m.n_cells]
        ref = (f(d) + c[4] * m2[:, 0] + c[5] * m2[:, 1] + c[6] * m2[:, 2]
               + c[7] * m2[:, 3] + c[8] * m2[:, 4] + c[9] * m2[:, 5])
        assert np.abs(avg - ref).max() < 1e-13


class TestConnectivity:
    def test_face_neighbors_consistent(self, tet_mesh):
        m = tet_mesh
        for i in range(m.n_cells):
            for fid, sign in m.cell_faces[i]:
                own = m.f_owner[fid] if sign > 0 else m.f_neigh[fid]
                assert own == i

    def test_ghost_donors(self, hex_mesh):
        m = hex_mesh
        ng = m.n_total - m.n_cells
        assert ng == int(m.f_is_boundary.sum())
        for g in range(m.n_cells, m.n_total):
            fid = m.ghost_face[g - m.n_cells]
            assert m.f_neigh[fid] == g
            assert m.f_owner[fid] == m.ghost_donor[g - m.n_cells]

    def test_periodic_no_ghosts(self, periodic_hex):
        m = periodic_hex
        assert m.n_total == m.n_cells
        assert not m.f_is_boundary.any()

    def test_periodic_shifts(self, periodic_hex):
        m = periodic_hex
        # every cell has 6 neighbors; shifts only on wrap faces
        for i in range(m.n_cells):
            assert len(m.cell_nbrs[i]) == 6
        shifts = np.concatenate([np.array([s for _, s in m.cell_nbrs[i]])
                                 for i in range(m.n_cells)])
        mags = np.unique(np.round(np.abs(shifts), 12))
        assert set(mags) <= {0.0, 1.0}

    def test_nonmanifold_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1],
                          [0, 0, -1], [1, 1, 1]], dtype=float)
        cells = [(0, 1, 2, 3), (0, 2, 1, 4), (0, 1, 2, 5)]
        with pytest.raises(MeshError):
            Mesh(verts, cells)


class TestMeshFile:
    def test_round_trip(self, tet_mesh, tmp_path):
        p = tmp_path / "m.kfm"
        tet_mesh.export_text(p)
        m2 = Mesh.from_text(p)
        assert np.array_equal(m2.verts, tet_mesh.verts)
        assert m2.n_cells == tet_mesh.n_cells
        assert np.allclose(m2.vol[: m2.n_cells], tet_mesh.vol[: tet_mesh.n_cells])
        assert np.allclose(m2.centroid[: m2.n_cells],
                           tet_mesh.centroid[: tet_mesh.n_cells])

    def test_round_trip_periodic(self, periodic_hex, tmp_path):
        p = tmp_path / "m.kfm"
        periodic_hex.export_text(p)
        m2 = Mesh.from_text(p)
        assert m2.n_total == m2.n_cells == periodic_hex.n_cells
        assert np.allclose(sorted(m2.f_area), sorted(periodic_hex.f_area))

    def test_exact_coordinate_round_trip(self, tmp_path):
        xs = np.array([0.0, 1.0 / 3.0, 0.7071067811865476, 1.0])
        m = generate_box_hex(xs, xs[:2], xs[:2])
        p = tmp_path / "m.kfm"
        m.export_text(p)
        m2 = Mesh.from_text(p)
        assert np.array_equal(m2.verts, m.verts)

    def test_format_error_reports_line(self, tmp_path):
        p = tmp_path / "bad.kfm"
        p.write_text("kineticfv-mesh 1\nvertices 2\n0 0 0\nnot-a-number 0 0\n")
        with pytest.raises(MeshFormatError) as ei:
            Mesh.from_text(p)
        assert ei.value.line == 4

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.kfm"
        p.write_text("something-else 1\n")
        with pytest.raises(MeshFormatError):
            Mesh.from_text(p)


class TestGenerators:
    def test_tet6_conforming(self):
        # all internal faces must pair up; closure already checks this,
        # but also confirm the count: 6 tets per cube, 2x2x2 cubes
        m = generate_box_tet6(unit_nodes(2), unit_nodes(2), unit_nodes(2))
        assert m.n_cells == 48
        assert m.surface_closure < 1e-12

    def test_wall_refine_map_monotone(self):
        eta = np.linspace(0.0, 1.0, 257)
        x = wall_refine_map(eta)
        assert x[0] == 0.0 and np.isclose(x[-1], 1.0)
        assert (np.diff(x) > 0.0).all()

    def test_tanh_stretch_first_layer(self):
        nodes = tanh_stretch_nodes(12, 0.004)
        assert nodes[0] == 0.0 and np.isclose(nodes[-1], 1.0)
        assert np.isclose(nodes[1] - nodes[0], 0.004, rtol=1e-10)
        assert (np.diff(nodes) > 0.0).all()


class TestStencils:
    def test_weno_hex_interior(self, hex_mesh):
        st = build_stencils(hex_mesh, "weno")
        assert isinstance(st, StencilSet)
        # interior cell of a 3^3 grid: the cell itself is implicit, the
        # stencil lists hold only neighbors
        i = 13
        assert st.degree[i] == 2
        cells = {c for c, _ in st.big[i]}
        assert i not in cells
        assert len(st.big[i]) >= 9
        assert len(st.sub[i]) == 8  # one corner triple per octant
        for sub in st.sub[i]:
            assert len(sub) >= 3

    def test_weno_tet_substencils(self, tet_mesh):
        st = build_stencils(tet_mesh, "weno")
        i = 0
        subs = st.sub[i]
        assert 1 <= len(subs) <= 4  # leave-one-out, deduplicated
        for sub in subs:
            assert len(sub) >= 3
            assert all(c != i for c, _ in sub)

    def test_hweno_compact(self, hex_mesh):
        st = build_stencils(hex_mesh, "hweno")
        i = 13
        assert len(st.big[i]) == 6  # face neighbors, self implicit
        assert len(st.sub[i]) == 6

    def test_periodic_stencils_shifted(self, periodic_hex):
        st = build_stencils(periodic_hex, "weno")
        for i in range(periodic_hex.n_cells):
            assert st.degree[i] == 2
            shifts = np.array([s for _, s in st.big[i]])
            assert np.abs(shifts).max() >= 0.0  # shifts present and finite
            assert np.isfinite(shifts).all()

    def test_flavor_validation(self, hex_mesh):
        with pytest.raises(ValueError):
            build_stencils(hex_mesh, "central")
