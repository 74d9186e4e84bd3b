"""Run artifacts: VTK field dumps, line profiles, residual logs, run reports.

All numeric text uses 17-significant-digit formatting so that rereading a
file reproduces the original float64 bit pattern exactly.  Formats:

* VTK: legacy ASCII unstructured grid, cell data density / velocity /
  pressure / schlieren (|grad rho|).
* profile CSV: comma-delimited, one header line ``s,rho,u,v,w,p``; rows are
  cell-centered samples along a straight line, sorted by arclength.
* residual log: plain text, one line per pseudo-iteration with columns
  ``step stage m res_density res_xmom res_ymom res_zmom res_energy``.
* run report: flat ``key = value`` text, diagnostics namespaced ``diag.*``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kinetic import conserved_to_primitive
from .mesh import MeshError

FLOAT_FMT = "%.17g"

# legacy VTK cell type ids
_VTK_TET = 10
_VTK_HEX = 12


def _fmt(x):
    return FLOAT_FMT % float(x)


# -- run report ---------------------------------------------------------------


@dataclass
class RunReport:
    """Summary of one solver run; serializes to flat key = value text."""

    case: str
    flavor: str
    scheme: str
    steps: int
    wall_time: float
    dt_min: float
    final_time: float
    residual_log: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_text(self):
        lines = [
            "case = %s" % self.case,
            "flavor = %s" % self.flavor,
            "scheme = %s" % self.scheme,
            "steps = %d" % self.steps,
            "wall_time = %s" % _fmt(self.wall_time),
            "dt_min = %s" % _fmt(self.dt_min),
            "final_time = %s" % _fmt(self.final_time),
            "residual_log = %s" % self.residual_log,
        ]
        for key in sorted(self.diagnostics):
            lines.append("diag.%s = %s" % (key, _fmt(self.diagnostics[key])))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        pairs = {}
        diag = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError("report line %d is not key = value" % lineno)
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key.startswith("diag."):
                diag[key[5:]] = float(val)
            else:
                pairs[key] = val
        try:
            return cls(case=pairs["case"], flavor=pairs["flavor"],
                       scheme=pairs["scheme"], steps=int(pairs["steps"]),
                       wall_time=float(pairs["wall_time"]),
                       dt_min=float(pairs["dt_min"]),
                       final_time=float(pairs["final_time"]),
                       residual_log=pairs.get("residual_log", ""),
                       diagnostics=diag)
        except KeyError as missing:
            raise ConfigError("report is missing key %s" % missing) from None


def write_report(path, report):
    with open(path, "w") as fh:
        fh.write(report.to_text())


def read_report(path):
    with open(path) as fh:
        return RunReport.from_text(fh.read())


# -- residual log -------------------------------------------------------------


class ResidualLog:
    """Per-pseudo-iteration residual history for implicit runs.

    One record per pseudo-iteration: physical step index (1-based), stage
    (1 or 2), pseudo index m (0-based), and the L2 pseudo-residual of each
    conserved equation.
    """

    columns = ("step", "stage", "m", "res_density", "res_xmom",
               "res_ymom", "res_zmom", "res_energy")

    def __init__(self):
        self.records = []

    def __len__(self):
        return len(self.records)

    def callback(self, step):
        """Adapter matching the time stepper's log(stage, m, r5) signature."""
        def log(stage, m, r5):
            self.records.append((step, stage, m) + tuple(float(r) for r in r5))
        return log

    def totals(self):
        """Root-sum-square residual across the five equations, per record."""
        if not self.records:
            return np.zeros(0)
        arr = np.asarray([rec[3:] for rec in self.records])
        return np.sqrt((arr ** 2).sum(axis=1))

    def write(self, path):
        with open(path, "w") as fh:
            fh.write("# " + " ".join(self.columns) + "\n")
            for rec in self.records:
                fh.write("%d %d %d %s %s %s %s %s\n"
                         % (rec[0], rec[1], rec[2], _fmt(rec[3]),
                            _fmt(rec[4]), _fmt(rec[5]), _fmt(rec[6]),
                            _fmt(rec[7])))

    @classmethod
    def read(cls, path):
        log = cls()
        with open(path) as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                t = line.split()
                log.records.append((int(t[0]), int(t[1]), int(t[2]))
                                   + tuple(float(x) for x in t[3:8]))
        return log


# -- VTK ----------------------------------------------------------------------


def schlieren(mesh, q):
    """|grad rho| per interior cell via Green-Gauss face averages.

    Ghost rows of q must already hold boundary images (or initial zeros,
    in which case boundary faces fall back to the interior value).
    """
    rho = q[:, 0]
    rho_ngh = rho[mesh.f_neigh].copy()
    blank = rho_ngh == 0.0
    rho_ngh[blank] = rho[mesh.f_owner][blank]
    face_avg = 0.5 * (rho[mesh.f_owner] + rho_ngh)
    g = np.zeros((mesh.n_cells, 3))
    contrib = mesh.f_normal * (mesh.f_area * face_avg)[:, None]
    np.add.at(g, mesh.f_owner, contrib)
    interior = mesh.f_neigh < mesh.n_cells
    np.add.at(g, mesh.f_neigh[interior], -contrib[interior])
    g /= mesh.vol[:mesh.n_cells, None]
    return np.sqrt((g ** 2).sum(axis=1))


def write_vtk(path, mesh, q, gamma=1.4, title="kineticfv fields"):
    """Legacy ASCII unstructured-grid dump with cell data: density,
    velocity, pressure and schlieren (|grad rho|)."""
    rho, u, v, w, p = conserved_to_primitive(q[:mesh.n_cells], gamma=gamma)
    schl = schlieren(mesh, q)
    out = []
    out.append("# vtk DataFile Version 3.0")
    out.append(title)
    out.append("ASCII")
    out.append("DATASET UNSTRUCTURED_GRID")
    out.append("POINTS %d double" % len(mesh.verts))
    for pt in mesh.verts:
        out.append("%s %s %s" % (_fmt(pt[0]), _fmt(pt[1]), _fmt(pt[2])))
    size = sum(len(cv) + 1 for cv in mesh.cell_verts)
    out.append("CELLS %d %d" % (mesh.n_cells, size))
    for cv in mesh.cell_verts:
        out.append(" ".join([str(len(cv))] + [str(i) for i in cv]))
    out.append("CELL_TYPES %d" % mesh.n_cells)
    for cv in mesh.cell_verts:
        out.append(str(_VTK_HEX if len(cv) == 8 else _VTK_TET))
    out.append("CELL_DATA %d" % mesh.n_cells)
    out.append("SCALARS density double")
    out.append("LOOKUP_TABLE default")
    out.extend(_fmt(x) for x in rho)
    out.append("VECTORS velocity double")
    out.extend("%s %s %s" % (_fmt(a), _fmt(b), _fmt(c))
               for a, b, c in zip(u, v, w))
    out.append("SCALARS pressure double")
    out.append("LOOKUP_TABLE default")
    out.extend(_fmt(x) for x in p)
    out.append("SCALARS schlieren double")
    out.append("LOOKUP_TABLE default")
    out.extend(_fmt(x) for x in schl)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


# -- line profiles ------------------------------------------------------------


def _cell_diameters(mesh):
    """Max vertex-to-vertex distance per interior cell."""
    diam = np.zeros(mesh.n_cells)
    for i, cv in enumerate(mesh.cell_verts):
        pts = mesh.verts[list(cv)]
        d = pts[:, None, :] - pts[None, :, :]
        diam[i] = np.sqrt((d ** 2).sum(axis=2)).max()
    return diam


def extract_profile(mesh, q, origin, direction, gamma=1.4):
    """Sample cells whose centroids lie within half a cell of a line.

    The selection radius is half the cell's own diameter, so lines through
    tet meshes pick up the cells they actually pierce.  Returns a dict of
    columns: s (arclength from origin), rho, u, v, w, p, sorted by s.
    """
    origin = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    norm = np.sqrt((d ** 2).sum())
    if norm == 0.0:
        raise ConfigError("profile direction must be non-zero")
    d = d / norm
    c = mesh.centroid[:mesh.n_cells]
    rel = c - origin
    s = rel @ d
    perp = rel - s[:, None] * d
    dist = np.sqrt((perp ** 2).sum(axis=1))
    sel = dist <= 0.5 * _cell_diameters(mesh)
    if not sel.any():
        raise MeshError("no cell centroids within half a cell of the line")
    order = np.argsort(s[sel], kind="stable")
    idx = np.flatnonzero(sel)[order]
    rho, u, v, w, p = conserved_to_primitive(q[idx], gamma=gamma)
    return {"s": s[idx], "rho": rho, "u": u, "v": v, "w": w, "p": p,
            "cells": idx}


def recirculation_height(mesh, q, x_window=(0.55, 0.98), y_cap=0.45):
    """Height of the tallest near-wall recirculation bubble on a hex slice.

    Works on axis-aligned structured hex meshes with the wall at y = 0.
    Takes the mid-z cell layer, integrates the x mass flux up each x-column
    into a streamfunction (zero at the wall), and finds the first height at
    which the near-wall lobe changes sign: that interpolated zero crossing
    is the top of the dividing streamline of a closed separation bubble.
    Returns the largest crossing over columns whose x centroid lies inside
    x_window, ignoring crossings above y_cap; 0.0 if nothing separates.
    """
    n = mesh.n_cells
    c = mesh.centroid[:n]
    zu = np.unique(np.round(c[:, 2], 12))
    lay = np.round(c[:, 2], 12) == zu[len(zu) // 2]
    cells = np.flatnonzero(lay)
    x = np.round(c[cells, 0], 12)
    best = 0.0
    for xc in np.unique(x):
        if not (x_window[0] <= xc <= x_window[1]):
            continue
        col = cells[x == xc]
        col = col[np.argsort(c[col, 1], kind="stable")]
        vy = [mesh.verts[list(mesh.cell_verts[i])][:, 1] for i in col]
        y_top = np.array([v.max() for v in vy])
        dy = np.array([v.max() - v.min() for v in vy])
        mdot = q[col, 1]                     # x momentum = x mass flux
        psi = np.cumsum(mdot * dy)           # streamfunction at cell tops
        s0 = np.sign(psi[0])
        if s0 == 0.0:
            continue
        flip = np.flatnonzero(np.sign(psi) != s0)
        if len(flip) == 0:
            continue
        k = flip[0]
        y_cross = (y_top[k] - dy[k] * psi[k]
                   / (psi[k] - (psi[k - 1] if k else 0.0)))
        if y_cross <= y_cap:
            best = max(best, float(y_cross))
    return best


_PROFILE_COLS = ("s", "rho", "u", "v", "w", "p")


def write_profile_csv(path, prof):
    with open(path, "w") as fh:
        fh.write(",".join(_PROFILE_COLS) + "\n")
        for row in zip(*[prof[k] for k in _PROFILE_COLS]):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_profile_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != _PROFILE_COLS:
            raise ConfigError("unexpected profile header: %s" % header)
        rows = [[float(x) for x in line.split(",")] for line in fh
                if line.strip()]
    arr = np.asarray(rows)
    if arr.size == 0:
        arr = arr.reshape(0, len(_PROFILE_COLS))
    return {k: arr[:, i] for i, k in enumerate(_PROFILE_COLS)}
