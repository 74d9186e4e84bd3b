"""Command-line front end.

Subcommands:

* ``run CONFIG``          run a case and write report / residuals / VTK
* ``convergence CONFIG``  grid-refinement study; prints (mesh, error, order)
* ``compare CONFIG_A CONFIG_B``  field deltas and timing ratio of two runs
* ``export-mesh CASE OUT.txt``   write a case's mesh in the text format

Unknown commands exit non-zero with a usage message.  All numeric output
uses 17-significant-digit formatting.
"""

import argparse
import sys

import numpy as np

from .config import parse_config
from .driver import resolve_case, run_config
from .errors import ConfigError, InvalidState, SolverDivergence
from .kinetic import primitive_to_conserved
from .mesh import MeshError, MeshFormatError
from .output import FLOAT_FMT

_CLI_ERRORS = (ConfigError, InvalidState, SolverDivergence, MeshError,
               MeshFormatError, OSError)


def _fmt(x):
    return FLOAT_FMT % float(x)


def _load_config(args):
    cfg = parse_config(args.config, overrides=args.set or ())
    if args.case:
        cfg.case_name = args.case
    return cfg


def _add_common(p):
    p.add_argument("config", help="path to a key = value config file")
    p.add_argument("--case", help="case name (overrides [case] name)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config entry; repeatable")


def cmd_run(args):
    cfg = _load_config(args)
    result = run_config(cfg, write_outputs=not args.no_output)
    rep = result.report
    print("case %s  flavor %s  scheme %s" % (rep.case, rep.flavor,
                                             rep.scheme))
    print("steps %d  final_time %s  dt_min %s  wall_time %s"
          % (rep.steps, _fmt(rep.final_time), _fmt(rep.dt_min),
             _fmt(rep.wall_time)))
    if rep.residual_log:
        print("residual log: %s" % rep.residual_log)
    return 0


def cmd_convergence(args):
    cfg = _load_config(args)
    case = resolve_case(cfg)
    if case.exact is None:
        print("error: case %r has no exact solution" % case.name,
              file=sys.stderr)
        return 1
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    prev = None
    for n in sizes:
        cfg.mesh_n = n
        result = run_config(cfg, write_outputs=False)
        err = density_error(result)
        order = (np.log(prev[1] / err) / np.log(n / prev[0])
                 if prev is not None else float("nan"))
        rows.append((n, err, order))
        prev = (n, err)
    print("%8s %26s %10s" % ("mesh", "L2_density_error", "order"))
    for n, err, order in rows:
        print("%8d %26s %10s" % (n, _fmt(err),
                                 "-" if np.isnan(order) else "%.4f" % order))
    return 0


def density_error(result, t=None):
    """Volume-weighted L2 error of cell-averaged density vs the exact
    solution at the final time."""
    case = result.case
    mesh = result.mesh
    t = result.report.final_time if t is None else t

    def exact_cons(x):
        w = case.exact(x, t)
        return primitive_to_conserved(w[:, 0], w[:, 1], w[:, 2], w[:, 3],
                                      w[:, 4], gamma=case.gamma)
    qe = mesh.cell_average(exact_cons)
    vol = mesh.vol[:mesh.n_cells]
    diff = result.q[:mesh.n_cells, 0] - qe[:, 0]
    return float(np.sqrt((vol * diff ** 2).sum() / vol.sum()))


def cmd_compare(args):
    cfg_a = parse_config(args.config_a, overrides=args.set or ())
    cfg_b = parse_config(args.config_b, overrides=args.set or ())
    res_a = run_config(cfg_a, write_outputs=False)
    res_b = run_config(cfg_b, write_outputs=False)
    if res_a.q.shape != res_b.q.shape:
        print("error: runs are on different meshes; fields not comparable",
              file=sys.stderr)
        return 1
    names = ("density", "xmom", "ymom", "zmom", "energy")
    n = res_a.mesh.n_cells
    delta = np.abs(res_a.q[:n] - res_b.q[:n]).max(axis=0)
    print("run A: %s  %s  wall_time %s"
          % (res_a.report.scheme, res_a.report.flavor,
             _fmt(res_a.report.wall_time)))
    print("run B: %s  %s  wall_time %s"
          % (res_b.report.scheme, res_b.report.flavor,
             _fmt(res_b.report.wall_time)))
    for name, d in zip(names, delta):
        print("max|dA - dB| %s = %s" % (name, _fmt(d)))
    ratio = res_a.report.wall_time / max(res_b.report.wall_time, 1.0e-300)
    print("timing ratio A/B = %s" % _fmt(ratio))
    return 0


def cmd_export_mesh(args):
    from .cases import CASES
    if args.case not in CASES:
        print("error: unknown case %r; choose from %s"
              % (args.case, ", ".join(sorted(CASES))), file=sys.stderr)
        return 1
    case = CASES[args.case]()
    kw = {}
    if args.n is not None:
        kw["n"] = args.n
    if args.scale is not None:
        kw["scale"] = args.scale
    try:
        mesh = case.make_mesh(**kw)
    except TypeError as err:
        print("error: %s" % err, file=sys.stderr)
        return 1
    mesh.export_text(args.out)
    print("wrote %s (%d cells)" % (args.out, mesh.n_cells))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="kineticfv",
                                description="finite-volume gas-kinetic "
                                            "flow solver")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    pr = sub.add_parser("run", help="run one case from a config file")
    _add_common(pr)
    pr.add_argument("--no-output", action="store_true",
                    help="skip writing report/residuals/VTK")
    pr.set_defaults(func=cmd_run)

    pc = sub.add_parser("convergence",
                        help="grid refinement study on a case with an "
                             "exact solution")
    _add_common(pc)
    pc.add_argument("--sizes", default="5,10,20",
                    help="comma-separated mesh sizes (default 5,10,20)")
    pc.set_defaults(func=cmd_convergence)

    pm = sub.add_parser("compare", help="run two configs and diff fields")
    pm.add_argument("config_a")
    pm.add_argument("config_b")
    pm.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                    help="override applied to both configs; repeatable")
    pm.set_defaults(func=cmd_compare)

    pe = sub.add_parser("export-mesh",
                        help="write a case's mesh as portable text")
    pe.add_argument("case")
    pe.add_argument("out")
    pe.add_argument("--n", type=int, help="mesh size for cases taking n")
    pe.add_argument("--scale", choices=("desk", "full"))
    pe.set_defaults(func=cmd_export_mesh)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except _CLI_ERRORS as err:
        print("error: %s" % err, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
