"""Finite-volume gas dynamics with a gas-kinetic BGK interface flux.

Third-order WENO / compact HWENO reconstruction on unstructured hex/tet
meshes, explicit two-stage fourth-order and implicit two-stage third-order
time integration; the implicit stage systems are relaxed in pseudo-time by
LUSGS sweeps or a restarted, Jacobi-preconditioned block GMRES.
"""

from kineticfv.mesh import (
    Mesh,
    MeshError,
    MeshFormatError,
    StencilSet,
    build_stencils,
    generate_box_hex,
    generate_box_tet6,
    tanh_stretch_nodes,
    wall_refine_map,
)
from kineticfv.cases import CASES, CaseSpec
from kineticfv.config import SolverConfig, emit_config, parse_config
from kineticfv.driver import RunResult, run_case, run_config
from kineticfv.output import (
    ResidualLog,
    RunReport,
    extract_profile,
    read_report,
    write_profile_csv,
    write_report,
    write_vtk,
)

__version__ = "0.1.0"

__all__ = [
    "Mesh",
    "MeshError",
    "MeshFormatError",
    "StencilSet",
    "build_stencils",
    "generate_box_hex",
    "generate_box_tet6",
    "tanh_stretch_nodes",
    "wall_refine_map",
    "CASES",
    "CaseSpec",
    "SolverConfig",
    "parse_config",
    "emit_config",
    "RunResult",
    "run_case",
    "run_config",
    "ResidualLog",
    "RunReport",
    "read_report",
    "write_report",
    "write_vtk",
    "extract_profile",
    "write_profile_csv",
    "__version__",
]
