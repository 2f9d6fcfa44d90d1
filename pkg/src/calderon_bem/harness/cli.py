"""``calderon-bem`` command line.

Exit codes: 0 success, 1 configuration or runtime error, 2 a solve that did
not converge (argparse usage errors also exit with 2).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ..geometry import MeshError, MeshParseError, barycentric_refine, generate_cube, generate_sphere, load_mesh, save_mesh
from .config import ConfigError, load_config
from .verify import SUITES, run_suite

log = logging.getLogger("calderon_bem")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def _single_thread():
    """Pin numba to one thread and run sweeps in-process for reproducible results."""
    os.environ["CALDERON_BEM_WORKERS"] = "1"
    import numba

    numba.set_num_threads(1)


def cmd_solve(args):
    from .runner import run_task

    config = load_config(args.config)
    out = Path(args.output or config.output_directory)
    report, _ = run_task(config, out)
    if report["task"] == "compress":
        comp = report["compression"]
        print(f"compression ratio {comp['compression_ratio']:.4f} ({comp['stored_entries']} stored entries)")
        print(f"report written to {out / 'report.json'}")
        return EXIT_OK
    solve = report["solve"]
    mv = report["matvecs"]
    status = "converged" if solve["converged"] else "did not converge"
    print(
        f"{status} after {solve['iterations']} iterations "
        f"(relative residual {solve['final_residual']:.3e}); "
        f"matvecs {mv['instrumented']} (predicted {mv['predicted']})"
    )
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK if solve["converged"] else EXIT_NOT_CONVERGED


def cmd_sweep(args):
    from .runner import run_sweep

    config = load_config(args.config)
    out = Path(args.output or config.output_directory)
    rows = run_sweep(config, out, workers=args.workers)
    failed = [row for row in rows if row["status"] != "ok"]
    for row in rows:
        detail = row.get("error") or f"iterations={row.get('iterations', '')} matvecs={row.get('matvecs', '')}"
        print(f"{row['status']:>6}  {row['label']}: {detail}")
    print(f"summary written to {out / 'summary.csv'}")
    return EXIT_ERROR if failed else EXIT_OK


def cmd_verify(args):
    checks = run_suite(args.suite)
    for check in checks:
        print(check.line())
    failed = sum(not c.passed for c in checks)
    print(f"{args.suite}: {len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_ERROR


def cmd_field(args):
    from ..pmchwt import Discretization, TransmissionSolution
    from .fields import Plane, default_extent, field_grid, write_field_csv
    from .runner import load_solution, solve_config
    from .scenarios import build_problem

    config = load_config(args.config)
    plane = Plane.parse(args.plane)
    if args.solution:
        problem = build_problem(config)
        disc = Discretization(problem)
        coefficients, incident = load_solution(args.solution, disc)
        solution = TransmissionSolution.from_coefficients(problem, disc, config.variant, coefficients, incident)
    else:
        solution = solve_config(config)
        if not solution.report.converged:
            log.warning("solve did not converge; the field uses the last iterate")
    extent = tuple(args.extent) if args.extent else default_extent(solution.problem.mesh, plane)
    min_distance = args.min_distance if args.min_distance is not None else 0.1 * config.h
    points, field, region, near = field_grid(solution, plane, extent, tuple(args.resolution), min_distance)
    path = write_field_csv(points, field, region, near, args.output)
    print(f"{points.shape[0]} points written to {path} ({int(near.sum())} flagged near a surface)")
    return EXIT_OK


def cmd_mesh(args):
    if args.mesh_command == "generate":
        if args.shape == "cube":
            mesh = generate_cube(args.side, tuple(args.origin), args.h, jitter=args.jitter, seed=args.seed)
        else:
            mesh = generate_sphere(args.radius, args.subdivisions, tuple(args.origin))
        save_mesh(mesh, args.output)
        print(f"{mesh.n_triangles} triangles written to {args.output}")
    elif args.mesh_command == "refine":
        refined = barycentric_refine(load_mesh(args.input)).refined
        save_mesh(refined, args.output)
        print(f"{refined.n_triangles} triangles written to {args.output}")
    else:
        mesh = load_mesh(args.input, validate=False)
        lo, hi = mesh.bounding_box()
        print(f"vertices     {mesh.n_vertices}")
        print(f"triangles    {mesh.n_triangles}")
        print(f"edges        {mesh.n_edges}")
        print(f"scatterers   {mesh.n_scatterers}")
        print(f"max edge     {mesh.max_edge_length:.6g}")
        print(f"bounding box {np.round(lo, 6).tolist()} .. {np.round(hi, 6).tolist()}")
        try:
            mesh.validate()
            print("valid        yes")
        except MeshError as exc:
            print(f"valid        no ({exc})")
            return EXIT_ERROR
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="calderon-bem", description=__doc__.splitlines()[0])
    parser.add_argument("--single-thread", action="store_true", help="one numba thread and no sweep workers")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario (or run a compress task)")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (default: output.directory of the config)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run the sweep grid of a scenario")
    p.add_argument("config")
    p.add_argument("-o", "--output")
    p.add_argument("--workers", type=int, help="worker processes (default: $CALDERON_BEM_WORKERS or 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=SUITES)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("field", help="evaluate the field on a plane grid")
    p.add_argument("config")
    p.add_argument("--plane", default="y=0.2", help="fixed coordinate, e.g. y=0.2")
    p.add_argument("--extent", type=float, nargs=4, metavar=("U0", "U1", "V0", "V1"))
    p.add_argument("--resolution", type=int, nargs=2, default=(41, 41), metavar=("NU", "NV"))
    p.add_argument("--solution", help="solution.npz from a previous solve of the same config")
    p.add_argument("--min-distance", type=float, help="flag points closer than this to a surface (default h/10)")
    p.add_argument("-o", "--output", default="field.csv")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("mesh", help="generate, refine or inspect meshes")
    msub = p.add_subparsers(dest="mesh_command", required=True)
    g = msub.add_parser("generate")
    g.add_argument("shape", choices=("cube", "sphere"))
    g.add_argument("--side", type=float, default=1.0)
    g.add_argument("--h", type=float)
    g.add_argument("--jitter", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--radius", type=float, default=1.0)
    g.add_argument("--subdivisions", type=int, default=2)
    g.add_argument("--origin", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    g.add_argument("-o", "--output", required=True)
    r = msub.add_parser("refine", help="barycentric refinement")
    r.add_argument("input")
    r.add_argument("-o", "--output", required=True)
    i = msub.add_parser("info")
    i.add_argument("input")
    p.set_defaults(func=cmd_mesh)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.single_thread:
        _single_thread()
    try:
        return args.func(args)
    except (ConfigError, MeshError, MeshParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
