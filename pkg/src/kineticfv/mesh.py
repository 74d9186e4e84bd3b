"""Unstructured hex/tet meshes: geometry, generators, stencils and text IO.

Cell geometry (volume, centroid, second central moments) is exact for
tetrahedra and planar-faced hexahedra; hexes are decomposed into five
tetrahedra for the integrals.  Faces carry Gauss quadrature rules (2x2
tensor on quads, 3-point symmetric on triangles, both exact for quadratic
integrands on planar faces) plus an orthonormal local frame whose first
axis is the outward normal.

Periodic boundaries are resolved at build time: the two paired boundary
faces collapse into a single interior face whose far cell carries a
translation vector, so reconstruction stencils wrap around the domain
without ghost cells.  All remaining boundary faces get one layer of
mirror-image ghost cells for stencil support.
"""

from __future__ import annotations

import numpy as np


class MeshError(Exception):
    """Raised for geometric or topological defects found at build time."""


class MeshFormatError(Exception):
    """Raised by the text importer; carries the offending 1-based line."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# outward-oriented face templates (vertex orderings give outward normals
# for positively oriented cells)
_TET_FACES = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))
_HEX_FACES = (
    (0, 3, 2, 1),  # bottom
    (4, 5, 6, 7),  # top
    (0, 1, 5, 4),
    (1, 2, 6, 5),
    (2, 3, 7, 6),
    (3, 0, 4, 7),
)
# five-tet decomposition of a hex, used for the exact volume integrals
_HEX_TETS = ((0, 1, 2, 5), (0, 2, 3, 7), (0, 5, 7, 4), (2, 7, 5, 6), (0, 2, 7, 5))

# reference-tet monomial integrals: over {xi >= 0, sum xi <= 1}
_TET_I0 = 1.0 / 6.0
_TET_I1 = 1.0 / 24.0
_TET_I2_DIAG = 1.0 / 60.0
_TET_I2_OFF = 1.0 / 120.0

_M2_IDX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))  # xx yy zz xy xz yz


def _tet_moments(v):
    """Volume, centroid and averaged second central moments of one tet.

    v: (4,3) vertex array.  Returns (vol, centroid(3,), m2(6,)) where m2
    holds the cell averages of (x-c)(y-c) products in _M2_IDX order.
    """
    e = v[1:] - v[0]
    det = np.linalg.det(e)
    vol = abs(det) / 6.0
    if vol <= 0.0:
        raise MeshError("degenerate tetrahedron")
    c = v.mean(axis=0)
    # int over reference tet of xi xi^T, mapped through x = v0 + e^T xi
    ref = np.full((3, 3), _TET_I2_OFF)
    np.fill_diagonal(ref, _TET_I2_DIAG)
    raw = e.T @ ref @ e * abs(det)          # int (x-v0)(x-v0)^T
    d = c - v[0]
    cen = raw / vol - np.outer(d, d)        # averaged central moments
    m2 = np.array([cen[i, j] for i, j in _M2_IDX])
    return vol, c, m2


def _cell_moments(verts, cv):
    """Exact volume/centroid/m2 of a tet or (planar-faced) hex cell."""
    if len(cv) == 4:
        return _tet_moments(verts[list(cv)])
    # hex: accumulate raw integrals over the five-tet split
    pts = verts[list(cv)]
    origin = pts.mean(axis=0)
    vol = 0.0
    first = np.zeros(3)
    second = np.zeros((3, 3))
    for t in _HEX_TETS:
        v = pts[list(t)] - origin
        e = v[1:] - v[0]
        det = abs(np.linalg.det(e))
        tv = det / 6.0
        if tv <= 0.0:
            raise MeshError("degenerate hexahedron (five-tet split collapsed)")
        ref = np.full((3, 3), _TET_I2_OFF)
        np.fill_diagonal(ref, _TET_I2_DIAG)
        raw2 = e.T @ ref @ e * det
        d1 = e.sum(axis=0) * _TET_I1 * det + v[0] * tv   # int (x - v0' + v0')
        # shift second moment from v0 to origin of the local frame
        raw2 = raw2 + np.outer(v[0], d1 - v[0] * tv) + np.outer(d1 - v[0] * tv, v[0]) \
            + np.outer(v[0], v[0]) * tv
        vol += tv
        first += d1
        second += raw2
    c_loc = first / vol
    cen = second / vol - np.outer(c_loc, c_loc)
    m2 = np.array([cen[i, j] for i, j in _M2_IDX])
    return vol, origin + c_loc, m2


def m2_to_matrix(m2):
    """(...,6) packed second moments -> (...,3,3) symmetric matrices."""
    m2 = np.asarray(m2)
    out = np.zeros(m2.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(_M2_IDX):
        out[..., i, j] = m2[..., k]
        out[..., j, i] = m2[..., k]
    return out


def matrix_to_m2(m):
    out = np.zeros(m.shape[:-2] + (6,))
    for k, (i, j) in enumerate(_M2_IDX):
        out[..., k] = m[..., i, j]
    return out


def _face_geometry(verts, fverts):
    """Area vector (outward for template ordering), centroid, quadrature.

    Returns (normal, area, centroid, qpts(nq,3), qw(nq,) fractional weights).
    """
    p = verts[list(fverts)]
    if len(fverts) == 3:
        av = 0.5 * np.cross(p[1] - p[0], p[2] - p[0])
        area = np.linalg.norm(av)
        if area <= 0.0:
            raise MeshError("degenerate triangular face")
        n = av / area
        cen = p.mean(axis=0)
        # symmetric 3-point rule, exact for quadratics
        bary = np.array([
            [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ])
        qp = bary @ p
        qw = np.full(3, 1.0 / 3.0)
        return n, area, cen, qp, qw
    # bilinear quad, 2x2 Gauss
    g = 1.0 / np.sqrt(3.0)
    gp = np.array([(-g, -g), (g, -g), (g, g), (-g, g)])
    qp = np.empty((4, 3))
    jw = np.empty(4)
    nsum = np.zeros(3)
    for k, (xi, eta) in enumerate(gp):
        sh = 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                              (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])
        dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
        deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
        qp[k] = sh @ p
        tx = dxi @ p
        ty = deta @ p
        jv = np.cross(tx, ty)
        jw[k] = np.linalg.norm(jv)
        nsum += jv
    area = jw.sum()
    if area <= 0.0:
        raise MeshError("degenerate quadrilateral face")
    n = nsum / np.linalg.norm(nsum)
    cen = (qp * (jw / area)[:, None]).sum(axis=0)
    return n, area, cen, qp, jw / area


def _frames(normals):
    """Orthonormal frames (n, t1, t2) for an (nf,3) array of unit normals."""
    n = normals
    pick = np.argmin(np.abs(n), axis=1)
    t = np.zeros_like(n)
    t[np.arange(len(n)), pick] = 1.0
    e2 = np.cross(n, t)
    e2 /= np.linalg.norm(e2, axis=1, keepdims=True)
    e3 = np.cross(n, e2)
    fr = np.stack([n, e2, e3], axis=1)  # rows are the frame vectors
    return fr


class Mesh:
    """Array-backed unstructured mesh with one layer of mirror ghosts.

    Interior cells occupy indices [0, n_cells); ghosts follow in
    [n_cells, n_total).  Face arrays reference both ranges.  ``f_shift``
    is the translation added to the far cell's geometry to bring it
    adjacent across the face (nonzero only for periodic wrap faces).
    """

    def __init__(self, verts, cells, patches=None, periodic=(), patch_kinds=None):
        self.verts = np.asarray(verts, dtype=float)
        if self.verts.ndim != 2 or self.verts.shape[1] != 3:
            raise MeshError("verts must be (n,3)")
        self.cell_verts = [tuple(int(i) for i in cv) for cv in cells]
        nv = len(self.verts)
        for cv in self.cell_verts:
            if len(cv) not in (4, 8):
                raise MeshError("cells must have 4 or 8 vertices")
            if any(i < 0 or i >= nv for i in cv):
                raise MeshError("cell references a vertex out of range")
        self.n_cells = len(self.cell_verts)
        self.cell_kind = np.array([len(cv) for cv in self.cell_verts], dtype=np.int8)
        self._build_cells()
        self._build_faces(patches, periodic)
        self._build_ghosts()
        self._build_adjacency()
        self._check_closure()
        # advisory boundary-condition tags carried by the mesh file; cases
        # may override them when wiring boundary conditions by patch name
        kinds = dict(patch_kinds or {})
        self.patch_kinds = {name: kinds.get(name, "unspecified")
                            for name in self.patch_names}

    # -- construction ------------------------------------------------------

    def _build_cells(self):
        n = self.n_cells
        self.vol = np.empty(n)
        self.centroid = np.empty((n, 3))
        self.m2 = np.empty((n, 6))
        for i, cv in enumerate(self.cell_verts):
            try:
                self.vol[i], self.centroid[i], self.m2[i] = _cell_moments(self.verts, cv)
            except MeshError as e:
                raise MeshError(f"cell {i}: {e}") from None

    def _build_faces(self, patches, periodic):
        # enumerate unique faces from per-cell templates
        fmap = {}
        owner, neigh, fverts = [], [], []
        cell_face_ids = [[] for _ in range(self.n_cells)]
        cell_face_sign = [[] for _ in range(self.n_cells)]
        for ci, cv in enumerate(self.cell_verts):
            tmpl = _TET_FACES if len(cv) == 4 else _HEX_FACES
            for loc in tmpl:
                vs = tuple(cv[k] for k in loc)
                key = tuple(sorted(vs))
                fid = fmap.get(key)
                if fid is None:
                    fid = len(owner)
                    fmap[key] = fid
                    owner.append(ci)
                    neigh.append(-1)
                    fverts.append(vs)
                    sign = 1
                else:
                    if neigh[fid] != -1:
                        raise MeshError(f"face shared by more than two cells near cell {ci}")
                    neigh[fid] = ci
                    sign = -1
                cell_face_ids[ci].append(fid)
                cell_face_sign[ci].append(sign)
        nf = len(owner)
        self.f_owner = np.array(owner, dtype=np.int64)
        self.f_neigh = np.array(neigh, dtype=np.int64)
        self.face_verts = fverts
        self._cell_face_ids = cell_face_ids
        self._cell_face_sign = cell_face_sign

        # patch assignment on boundary faces
        bnd = np.flatnonzero(self.f_neigh == -1)
        self.patch_names = []
        self.f_patch = np.full(nf, -1, dtype=np.int64)
        if patches is not None:
            if callable(patches):
                for fid in bnd:
                    p = self.verts[list(self.face_verts[fid])]
                    name = patches(p.mean(axis=0))
                    if name is None:
                        raise MeshError("boundary face not assigned to any patch")
                    if name not in self.patch_names:
                        self.patch_names.append(name)
                    self.f_patch[fid] = self.patch_names.index(name)
            else:
                lookup = {}
                for name, facesets in patches.items():
                    if name not in self.patch_names:
                        self.patch_names.append(name)
                    pi = self.patch_names.index(name)
                    for fs in facesets:
                        lookup[tuple(sorted(fs))] = pi
                for fid in bnd:
                    key = tuple(sorted(self.face_verts[fid]))
                    if key not in lookup:
                        raise MeshError("boundary face not covered by any patch")
                    self.f_patch[fid] = lookup.pop(key)
                if lookup:
                    raise MeshError(f"{len(lookup)} patch faces are not boundary faces")
        elif len(bnd):
            raise MeshError("mesh has boundary faces but no patches given")

        # geometry before the periodic merge (pair matching uses centroids)
        geom = [_face_geometry(self.verts, fv) for fv in self.face_verts]
        self.f_normal = np.array([g[0] for g in geom])
        self.f_area = np.array([g[1] for g in geom])
        self.f_centroid = np.array([g[2] for g in geom])
        nqmax = 4
        self.f_nq = np.array([len(g[4]) for g in geom], dtype=np.int64)
        self.f_qpts = np.zeros((nf, nqmax, 3))
        self.f_qw = np.zeros((nf, nqmax))
        for fid, g in enumerate(geom):
            self.f_qpts[fid, :len(g[4])] = g[3]
            self.f_qw[fid, :len(g[4])] = g[4]

        self.f_shift = np.zeros((nf, 3))
        self.periodic_names = [tuple(p) for p in periodic]
        self._merge_periodic()

    def _merge_periodic(self):
        """Collapse paired periodic boundary faces into wrap faces."""
        self._periodic_export = []  # (patch_a, verts_a, patch_b, verts_b)
        if not self.periodic_names:
            return
        drop = np.zeros(len(self.f_owner), dtype=bool)
        twin_of_dropped = {}
        scale = np.linalg.norm(self.verts.max(0) - self.verts.min(0))
        for pa, pb in self.periodic_names:
            for name in (pa, pb):
                if name not in self.patch_names:
                    raise MeshError(f"periodic patch '{name}' does not exist")
            ia = self.patch_names.index(pa)
            ib = self.patch_names.index(pb)
            fa = np.flatnonzero((self.f_patch == ia) & ~drop)
            fb = np.flatnonzero((self.f_patch == ib) & ~drop)
            if len(fa) != len(fb) or len(fa) == 0:
                raise MeshError(f"periodic patches '{pa}'/'{pb}' do not match")
            t = self.f_centroid[fb].mean(0) - self.f_centroid[fa].mean(0)
            key = np.round((self.f_centroid[fa] + t) / (1e-8 * scale)).astype(np.int64)
            tab = {tuple(k): f for k, f in zip(key, fa)}
            for f2 in fb:
                k = tuple(np.round(self.f_centroid[f2] / (1e-8 * scale)).astype(np.int64))
                f1 = tab.pop(k, None)
                if f1 is None:
                    raise MeshError(f"periodic face on '{pb}' has no partner on '{pa}'")
                # keep face f1; its far side is f2's owner translated by -t
                self.f_neigh[f1] = self.f_owner[f2]
                self.f_shift[f1] = -t
                self.f_patch[f1] = -1
                self._periodic_export.append((pa, self.face_verts[f1],
                                              pb, self.face_verts[f2]))
                twin_of_dropped[int(f2)] = int(f1)
                drop[f2] = True
            if tab:
                raise MeshError(f"periodic patches '{pa}'/'{pb}' left unmatched faces")
        if drop.any():
            self._compact_faces(~drop, twin_of_dropped)

    def _compact_faces(self, keep, twin_of_dropped):
        remap = np.full(len(keep), -1, dtype=np.int64)
        remap[keep] = np.arange(keep.sum())
        for ci in range(self.n_cells):
            ids, sg = [], []
            for fid, s in zip(self._cell_face_ids[ci], self._cell_face_sign[ci]):
                if keep[fid]:
                    ids.append(int(remap[fid]))
                    sg.append(s)
                else:
                    # dropped twin of a periodic pair: reattach as far side
                    ids.append(int(remap[twin_of_dropped[fid]]))
                    sg.append(-1)
            self._cell_face_ids[ci] = ids
            self._cell_face_sign[ci] = sg
        for name in ("f_owner", "f_neigh", "f_patch", "f_normal", "f_area",
                     "f_centroid", "f_nq", "f_qpts", "f_qw", "f_shift"):
            setattr(self, name, getattr(self, name)[keep])
        self.face_verts = [fv for fv, k in zip(self.face_verts, keep) if k]

    def _build_ghosts(self):
        bnd = np.flatnonzero(self.f_neigh == -1)
        ng = len(bnd)
        self.ghost_face = bnd.copy()
        self.ghost_donor = self.f_owner[bnd].copy()
        self.n_total = self.n_cells + ng
        gid = self.n_cells + np.arange(ng)
        self.f_neigh[bnd] = gid
        self.f_is_boundary = np.zeros(len(self.f_owner), dtype=bool)
        self.f_is_boundary[bnd] = True
        # mirror geometry across the face plane
        if ng:
            n = self.f_normal[bnd]
            p0 = self.f_centroid[bnd]
            c = self.centroid[self.ghost_donor]
            d = ((p0 - c) * n).sum(1)
            gc = c + 2.0 * d[:, None] * n
            house = np.eye(3)[None] - 2.0 * n[:, :, None] * n[:, None, :]
            gm2 = matrix_to_m2(house @ m2_to_matrix(self.m2[self.ghost_donor]) @
                               np.swapaxes(house, 1, 2))
            self.vol = np.concatenate([self.vol, self.vol[self.ghost_donor]])
            self.centroid = np.concatenate([self.centroid, gc])
            self.m2 = np.concatenate([self.m2, gm2])
        self.n_ghost = ng

    def _build_adjacency(self):
        # characteristic length: volume over largest face area
        maxs = np.zeros(self.n_cells)
        np.maximum.at(maxs, self.f_owner, self.f_area)
        interior_far = self.f_neigh < self.n_cells
        np.maximum.at(maxs, self.f_neigh[interior_far], self.f_area[interior_far])
        self.max_face_area = maxs
        self.h = self.vol[:self.n_cells] / maxs
        self.h = np.concatenate([self.h, self.h[self.ghost_donor]]) if self.n_ghost \
            else self.h
        # per-cell neighbor lists aligned with _cell_face_ids
        self.cell_faces = []
        self.cell_nbrs = []
        for ci in range(self.n_cells):
            fs, ns = [], []
            for fid, s in zip(self._cell_face_ids[ci], self._cell_face_sign[ci]):
                fs.append((fid, s))
                if s > 0:
                    ns.append((int(self.f_neigh[fid]), self.f_shift[fid].copy()))
                else:
                    ns.append((int(self.f_owner[fid]), -self.f_shift[fid]))
            self.cell_faces.append(fs)
            self.cell_nbrs.append(ns)
        self.f_frame = _frames(self.f_normal)

    def _check_closure(self):
        # sum of outward area vectors over each cell's full surface
        acc = np.zeros((self.n_cells, 3))
        ns = self.f_normal * self.f_area[:, None]
        np.add.at(acc, self.f_owner, ns)
        interior_far = self.f_neigh < self.n_cells
        np.add.at(acc, self.f_neigh[interior_far], -ns[interior_far])
        self.surface_closure = float(np.abs(acc).max(initial=0.0))
        scale = self.max_face_area.max()
        if self.surface_closure > 1e-10 * scale:
            raise MeshError(f"cell surface closure violated: {self.surface_closure:.3e}")

    # -- queries -----------------------------------------------------------

    @property
    def n_faces(self):
        return len(self.f_owner)

    def patch_faces(self, name):
        if name not in self.patch_names:
            raise KeyError(name)
        return np.flatnonzero(self.f_patch == self.patch_names.index(name))

    def cell_quadrature(self, n=4):
        """Volume quadrature points/weights per interior cell.

        Returns (pts (n_cells, nq, 3), w (n_cells, nq)) with the weights
        summing to each cell volume.  Hexes use tensor Gauss on the
        trilinear map, tets a collapsed (Duffy) tensor rule; both are far
        beyond the accuracy needed for averaging smooth fields.
        """
        gl, gw = np.polynomial.legendre.leggauss(n)
        tets = np.flatnonzero(self.cell_kind == 4)
        hexes = np.flatnonzero(self.cell_kind == 8)
        nq = n ** 3
        pts = np.zeros((self.n_cells, nq, 3))
        wts = np.zeros((self.n_cells, nq))
        if len(tets):
            v = np.array([self.verts[list(self.cell_verts[i])] for i in tets])
            a, b, c = np.meshgrid(*(0.5 * (gl + 1.0),) * 3, indexing="ij")
            wa, wb, wc = np.meshgrid(*(0.5 * gw,) * 3, indexing="ij")
            x1 = a.ravel()
            x2 = (b * (1 - a)).ravel()
            x3 = (c * (1 - a) * (1 - b)).ravel()
            jac = ((1 - a) ** 2 * (1 - b)).ravel()
            wref = (wa * wb * wc).ravel() * jac
            e = v[:, 1:] - v[:, :1]
            loc = np.stack([x1, x2, x3], axis=1)
            pts[tets] = v[:, :1] + np.einsum("qk,nkd->nqd", loc, e)
            vol6 = np.abs(np.linalg.det(e))
            wts[tets] = wref[None, :] * vol6[:, None]
        if len(hexes):
            v = np.array([self.verts[list(self.cell_verts[i])] for i in hexes])
            xi, et, ze = np.meshgrid(gl, gl, gl, indexing="ij")
            wi, we, wz = np.meshgrid(gw, gw, gw, indexing="ij")
            xi, et, ze = xi.ravel(), et.ravel(), ze.ravel()
            wq = (wi * we * wz).ravel()
            sh = 0.125 * np.stack([
                (1 - xi) * (1 - et) * (1 - ze), (1 + xi) * (1 - et) * (1 - ze),
                (1 + xi) * (1 + et) * (1 - ze), (1 - xi) * (1 + et) * (1 - ze),
                (1 - xi) * (1 - et) * (1 + ze), (1 + xi) * (1 - et) * (1 + ze),
                (1 + xi) * (1 + et) * (1 + ze), (1 - xi) * (1 + et) * (1 + ze)],
                axis=1)  # (nq, 8)
            dxi = 0.125 * np.stack([
                -(1 - et) * (1 - ze), (1 - et) * (1 - ze), (1 + et) * (1 - ze),
                -(1 + et) * (1 - ze), -(1 - et) * (1 + ze), (1 - et) * (1 + ze),
                (1 + et) * (1 + ze), -(1 + et) * (1 + ze)], axis=1)
            det_ = 0.125 * np.stack([
                -(1 - xi) * (1 - ze), -(1 + xi) * (1 - ze), (1 + xi) * (1 - ze),
                (1 - xi) * (1 - ze), -(1 - xi) * (1 + ze), -(1 + xi) * (1 + ze),
                (1 + xi) * (1 + ze), (1 - xi) * (1 + ze)], axis=1)
            dze = 0.125 * np.stack([
                -(1 - xi) * (1 - et), -(1 + xi) * (1 - et), -(1 + xi) * (1 + et),
                -(1 - xi) * (1 + et), (1 - xi) * (1 - et), (1 + xi) * (1 - et),
                (1 + xi) * (1 + et), (1 - xi) * (1 + et)], axis=1)
            pts[hexes] = np.einsum("qk,nkd->nqd", sh, v)
            J = np.stack([np.einsum("qk,nkd->nqd", g, v)
                          for g in (dxi, det_, dze)], axis=2)  # (n, nq, 3, 3)
            detJ = np.linalg.det(J)
            wts[hexes] = wq[None, :] * np.abs(detJ)
        return pts, wts

    def cell_average(self, fn, n=4):
        """Average fn(points (m,3)) -> (m,) or (m,k) over every interior cell."""
        pts, wts = self.cell_quadrature(n)
        flat = fn(pts.reshape(-1, 3))
        flat = np.asarray(flat, dtype=float)
        shape = (self.n_cells, pts.shape[1]) + flat.shape[1:]
        vals = flat.reshape(shape)
        if vals.ndim == 2:
            return (vals * wts).sum(1) / self.vol[:self.n_cells]
        return (vals * wts[..., None]).sum(1) / self.vol[:self.n_cells, None]

    # -- text format -------------------------------------------------------

    def export_text(self, path):
        """Plain text mesh file; coordinates keep full double precision."""
        lines = ["kineticfv-mesh 1"]
        lines.append(f"vertices {len(self.verts)}")
        for p in self.verts:
            lines.append(" ".join(f"{x:.17g}" for x in p))
        lines.append(f"cells {self.n_cells}")
        for cv in self.cell_verts:
            kind = "tet" if len(cv) == 4 else "hex"
            lines.append(kind + " " + " ".join(str(i) for i in cv))
        patches = self._export_patches()
        lines.append(f"patches {len(patches)}")
        for name, facelist in patches:
            kind = self.patch_kinds.get(name, "unspecified")
            lines.append(f"patch {name} {kind} {len(facelist)}")
            for fv in facelist:
                lines.append(str(len(fv)) + " " + " ".join(str(i) for i in fv))
        lines.append(f"periodic {len(self.periodic_names)}")
        for pa, pb in self.periodic_names:
            lines.append(f"{pa} {pb}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def _export_patches(self):
        out = {name: [] for name in self.patch_names}
        for fid in np.flatnonzero(self.f_patch >= 0):
            out[self.patch_names[self.f_patch[fid]]].append(self.face_verts[fid])
        # periodic faces were merged at build; recover both sides
        for pa, fva, pb, fvb in self._periodic_export:
            out[pa].append(fva)
            out[pb].append(fvb)
        return [(name, out[name]) for name in self.patch_names]

    @classmethod
    def from_text(cls, path):
        with open(path) as fh:
            raw = fh.read().splitlines()
        toks = [(i + 1, ln.split()) for i, ln in enumerate(raw)
                if ln.strip() and not ln.lstrip().startswith("#")]
        pos = 0

        def take(expect=None):
            nonlocal pos
            if pos >= len(toks):
                raise MeshFormatError("unexpected end of file",
                                      toks[-1][0] if toks else 1)
            ln, t = toks[pos]
            pos += 1
            if expect is not None and t[0] != expect:
                raise MeshFormatError(f"expected '{expect}', got '{t[0]}'", ln)
            return ln, t

        ln, t = take("kineticfv-mesh")
        if len(t) != 2 or t[1] != "1":
            raise MeshFormatError("unsupported format version", ln)
        ln, t = take("vertices")
        try:
            nv = int(t[1])
        except (IndexError, ValueError):
            raise MeshFormatError("bad vertex count", ln) from None
        verts = np.empty((nv, 3))
        for i in range(nv):
            ln, t = take()
            if len(t) != 3:
                raise MeshFormatError("vertex needs three coordinates", ln)
            try:
                verts[i] = [float(x) for x in t]
            except ValueError:
                raise MeshFormatError("bad vertex coordinate", ln) from None
        ln, t = take("cells")
        nc = int(t[1])
        cells = []
        for _ in range(nc):
            ln, t = take()
            kind, ids = t[0], t[1:]
            if kind not in ("tet", "hex"):
                raise MeshFormatError(f"unknown cell kind '{kind}'", ln)
            need = 4 if kind == "tet" else 8
            if len(ids) != need:
                raise MeshFormatError(f"{kind} needs {need} vertices", ln)
            try:
                cv = tuple(int(x) for x in ids)
            except ValueError:
                raise MeshFormatError("bad vertex index", ln) from None
            if any(i < 0 or i >= nv for i in cv):
                raise MeshFormatError("cell vertex index out of range", ln)
            cells.append(cv)
        ln, t = take("patches")
        npatch = int(t[1])
        patches = {}
        kinds = {}
        for _ in range(npatch):
            ln, t = take("patch")
            if len(t) != 4:
                raise MeshFormatError("patch needs a name, kind and face count", ln)
            name, cnt = t[1], int(t[3])
            kinds[name] = t[2]
            faces = []
            for _ in range(cnt):
                ln, t = take()
                try:
                    k = int(t[0])
                    fv = [int(x) for x in t[1:]]
                except ValueError:
                    raise MeshFormatError("bad patch face", ln) from None
                if k not in (3, 4) or len(fv) != k:
                    raise MeshFormatError("patch face needs 3 or 4 vertices", ln)
                faces.append(frozenset(fv))
            patches[name] = faces
        periodic = []
        if pos < len(toks):
            ln, t = take("periodic")
            nper = int(t[1])
            for _ in range(nper):
                ln, t = take()
                if len(t) != 2:
                    raise MeshFormatError("periodic pair needs two patch names", ln)
                periodic.append((t[0], t[1]))
        if pos != len(toks):
            raise MeshFormatError("trailing content", toks[pos][0])
        try:
            return cls(verts, cells, patches=patches, periodic=periodic,
                       patch_kinds=kinds)
        except MeshError as e:
            raise MeshFormatError(str(e)) from None


# ---------------------------------------------------------------------------
# generators


def wall_refine_map(eta):
    """Boundary-layer refinement of the unit interval (fixed endpoints)."""
    eta = np.asarray(eta, dtype=float)
    return eta - np.sin(2.0 * np.pi * eta) / 12.5


def tanh_stretch_nodes(n, first_layer):
    """n+1 nodes on [0,1] clustered at both ends, first spacing given."""
    from scipy.optimize import brentq
    if first_layer * n >= 1.0:
        return np.linspace(0.0, 1.0, n + 1)

    def spacing(delta):
        x = 0.5 * (1.0 + np.tanh(delta * (2.0 / n - 1.0)) / np.tanh(delta))
        return x - first_layer

    delta = brentq(spacing, 1e-6, 20.0)
    eta = np.linspace(0.0, 1.0, n + 1)
    x = 0.5 * (1.0 + np.tanh(delta * (2.0 * eta - 1.0)) / np.tanh(delta))
    x[0], x[-1] = 0.0, 1.0
    return x


def _box_patch_classifier(lo, hi):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    tol = 1e-8 * np.linalg.norm(hi - lo)
    names = (("xmin", "xmax"), ("ymin", "ymax"), ("zmin", "zmax"))

    def classify(c):
        for ax in range(3):
            if abs(c[ax] - lo[ax]) < tol:
                return names[ax][0]
            if abs(c[ax] - hi[ax]) < tol:
                return names[ax][1]
        return None

    return classify


def _grid_nodes(xs, ys, zs):
    xs, ys, zs = (np.asarray(a, float) for a in (xs, ys, zs))
    for a in (xs, ys, zs):
        if a.ndim != 1 or len(a) < 2 or np.any(np.diff(a) <= 0):
            raise MeshError("node arrays must be increasing 1-D arrays")
    nx, ny, nz = len(xs) - 1, len(ys) - 1, len(zs) - 1
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    return verts, (nx, ny, nz), vid


def _periodic_pairs(periodic):
    pairs = []
    for ax, flag in enumerate(periodic):
        if flag:
            pairs.append((("xmin", "xmax"), ("ymin", "ymax"), ("zmin", "zmax"))[ax])
    return pairs


def generate_box_hex(xs, ys, zs, periodic=(False, False, False)):
    """Structured hex mesh from node coordinate arrays along each axis."""
    verts, (nx, ny, nz), vid = _grid_nodes(xs, ys, zs)
    cells = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                cells.append((vid(i, j, k), vid(i + 1, j, k),
                              vid(i + 1, j + 1, k), vid(i, j + 1, k),
                              vid(i, j, k + 1), vid(i + 1, j, k + 1),
                              vid(i + 1, j + 1, k + 1), vid(i, j + 1, k + 1)))
    lo = (xs[0], ys[0], zs[0])
    hi = (xs[-1], ys[-1], zs[-1])
    return Mesh(verts, cells, patches=_box_patch_classifier(lo, hi),
                periodic=_periodic_pairs(periodic))


_KUHN_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


def generate_box_tet6(xs, ys, zs, periodic=(False, False, False)):
    """Structured tet mesh: each grid cube splits into six Kuhn tets.

    Cubes in odd x columns are split mirror-imaged in x.  A uniform split
    would align every cube's interior diagonal with (1, 1, 1), and waves
    travelling along that direction then see the same stencil bias in every
    cell, so the alternation breaks the lockstep.  A quad face's diagonal
    only depends on the mirror state of the two axes spanning it, so faces
    of adjacent cubes still match and the mesh stays conforming, periodic
    wraps included.
    """
    verts, (nx, ny, nz), vid = _grid_nodes(xs, ys, zs)
    cells = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                corner = (i, j, k)
                for perm in _KUHN_PERMS:
                    idx = [np.array(corner)]
                    for ax in perm:
                        nxt = idx[-1].copy()
                        nxt[ax] += 1
                        idx.append(nxt)
                    if i % 2 == 1:
                        for p in idx:
                            p[0] = 2 * i + 1 - p[0]
                    cv = [vid(*p) for p in idx]
                    e = verts[cv[1:]] - verts[cv[0]]
                    if np.linalg.det(e) < 0:
                        cv[1], cv[2] = cv[2], cv[1]
                    cells.append(tuple(cv))
    lo = (xs[0], ys[0], zs[0])
    hi = (xs[-1], ys[-1], zs[-1])
    return Mesh(verts, cells, patches=_box_patch_classifier(lo, hi),
                periodic=_periodic_pairs(periodic))


# ---------------------------------------------------------------------------
# reconstruction stencils


class StencilSet:
    """Reconstruction stencils for every interior cell.

    big[i]        list of (cell, shift) for the quadratic fit
    sub[i]        list of sub-stencils, each a list of (cell, shift)
    degree[i]     2 where the big stencil supports a quadratic, else 1
    ``compact`` distinguishes the face-neighbor (HWENO) flavor from the
    neighbors-of-neighbors (WENO) flavor.
    """

    def __init__(self, mesh, compact):
        self.mesh = mesh
        self.compact = bool(compact)
        self.big = []
        self.sub = []
        self.degree = np.full(mesh.n_cells, 2, dtype=np.int8)
        self._build()

    @staticmethod
    def _key(entry):
        c, s = entry
        return (c, round(s[0], 9), round(s[1], 9), round(s[2], 9))

    def _build(self):
        mesh = self.mesh
        for ci in range(mesh.n_cells):
            nbrs = mesh.cell_nbrs[ci]
            if self.compact:
                big = list(nbrs)
                subs = [[nb] for nb in nbrs]
            else:
                seen = {self._key((ci, np.zeros(3)))}
                big = []
                for nb, sh in nbrs:
                    k = self._key((nb, sh))
                    if k not in seen:
                        seen.add(k)
                        big.append((nb, sh))
                for nb, sh in nbrs:
                    if nb >= mesh.n_cells:
                        continue  # ghosts have no adjacency
                    for nb2, sh2 in mesh.cell_nbrs[nb]:
                        k = self._key((nb2, sh + sh2))
                        if k not in seen:
                            seen.add(k)
                            big.append((nb2, sh + sh2))
                if len(big) < 10:
                    self.degree[ci] = 1
                subs = self._weno_subs(ci, nbrs, big)
            self.big.append(big)
            self.sub.append(subs)

    def _weno_subs(self, ci, nbrs, big):
        mesh = self.mesh
        c0 = mesh.centroid[ci]
        if mesh.cell_kind[ci] == 4:
            base = [[nbrs[a] for a in range(len(nbrs)) if a != m]
                    for m in range(len(nbrs))]
        else:
            # corner-oriented triples: one face neighbor per axis sign
            dirs = [mesh.centroid[nb] + sh - c0 for nb, sh in nbrs]
            by_axis = {}
            for idx, d in enumerate(dirs):
                ax = int(np.argmax(np.abs(d)))
                sgn = 1 if d[ax] > 0 else -1
                by_axis.setdefault((ax, sgn), idx)
            base = []
            for sx in (1, -1):
                for sy in (1, -1):
                    for sz in (1, -1):
                        picks = [by_axis.get((0, sx)), by_axis.get((1, sy)),
                                 by_axis.get((2, sz))]
                        if None in picks:
                            continue
                        base.append([nbrs[p] for p in picks])
        out = []
        seen_sets = set()
        for sub in base:
            sub = self._augment(ci, list(sub), big)
            if sub is None:
                continue
            key = frozenset(self._key(e) for e in sub)
            if key in seen_sets:
                continue
            seen_sets.add(key)
            out.append(sub)
        return out

    def _augment(self, ci, sub, big):
        """Extend a sub-stencil until its centroid directions span 3-space."""
        mesh = self.mesh
        c0 = mesh.centroid[ci]
        h0 = mesh.h[ci]
        pool = [e for e in big
                if self._key(e) not in {self._key(s) for s in sub}]
        pool.sort(key=lambda e: np.linalg.norm(mesh.centroid[e[0]] + e[1] - c0))
        while True:
            d = np.array([(mesh.centroid[nb] + sh - c0) / h0 for nb, sh in sub])
            sv = np.linalg.svd(d, compute_uv=False)
            if sv[-1] > 1e-7 * sv[0]:
                return sub
            if not pool:
                return None
            sub.append(pool.pop(0))

    def big_rows(self, ci):
        return len(self.big[ci])


def build_stencils(mesh, flavor):
    """flavor: 'weno' (noncompact) or 'hweno' (compact face neighbors)."""
    if flavor not in ("weno", "hweno"):
        raise ValueError(f"unknown reconstruction flavor '{flavor}'")
    return StencilSet(mesh, compact=(flavor == "hweno"))
