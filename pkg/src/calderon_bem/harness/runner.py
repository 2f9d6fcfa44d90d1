"""Scenario execution: single solves, compression runs and parameter sweeps."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..hmatrix import HParams
from ..operators import assemble_S
from ..pmchwt import solve_problem
from ..spaces import build_rwg
from .config import sweep_points
from .report import (
    compress_report,
    normalise,
    solve_report,
    summary_row,
    write_report,
    write_residual_csv,
    write_summary_csv,
)
from .scenarios import build_problem

log = logging.getLogger(__name__)

WORKERS_ENV = "CALDERON_BEM_WORKERS"


class MatvecMismatchError(RuntimeError):
    """A converged run whose instrumented matvec count differs from the closed form."""


def solve_config(config, mesh=None):
    """Build and solve the scenario; returns the :class:`TransmissionSolution`."""
    problem = build_problem(config, mesh)
    return solve_problem(problem, config.variant, config.params, config.gmres)


def run_solve(config, output_directory=None):
    """Solve, check the matvec count and write the report files.

    Returns ``(report, solution)``.  The output directory receives
    ``report.json``, ``solution.npz`` and, unless disabled, ``residuals.csv``.
    """
    out = Path(output_directory or config.output_directory)
    solution = solve_config(config)
    report = solve_report(config, solution)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "report.json")
    if config.residual_csv:
        write_residual_csv(solution.report.residuals, out / "residuals.csv")
    save_solution(solution, out / "solution.npz")
    if solution.report.converged and not solution.matvecs_match:
        raise MatvecMismatchError(
            f"instrumented matvecs {solution.report.bio_matvecs} differ from the predicted "
            f"{solution.predicted_matvecs} after {solution.report.iterations} iterations"
        )
    return report, solution


def save_solution(solution, path):
    np.savez(
        path,
        coefficients=solution.coefficients,
        incident=solution.incident,
        sizes=np.asarray(solution.disc.sizes),
    )


def load_solution(path, disc):
    """Coefficient and incident vectors saved by :func:`run_solve`, checked against ``disc``."""
    data = np.load(path)
    if list(data["sizes"]) != list(disc.sizes):
        raise ValueError(
            f"{path}: saved dofs per scatterer {list(data['sizes'])} do not match the configuration {disc.sizes}"
        )
    return data["coefficients"], data["incident"]


def run_compress(config, output_directory=None):
    """Assemble S on the RWG space of the first scatterer with the preconditioner's parameters.

    The operator is always stored as an H-matrix so the compression ratio is
    meaningful; the exterior wavenumber is used.
    """
    out = Path(output_directory or config.output_directory)
    problem = build_problem(config)
    sub = problem.mesh.submesh(0)
    rwg = build_rwg(sub)
    pre = config.params.for_preconditioner
    start = time.perf_counter()
    op = assemble_S(rwg, rwg, problem.exterior, pre.orders, HParams(pre.nu, pre.chi, pre.leaf_size))
    elapsed = time.perf_counter() - start
    report = compress_report(config, problem, op, elapsed)
    write_report(report, out / "report.json")
    return report, op


def run_task(config, output_directory=None):
    if config.task == "compress":
        return run_compress(config, output_directory)
    return run_solve(config, output_directory)


def _slug(index, label):
    clean = "".join(ch if ch.isalnum() or ch in "=.-_" else "_" for ch in label)
    return f"{index:03d}-{clean}"[:120]


def _sweep_point(args):
    index, label, overrides, config, reference, out = args
    directory = Path(out) / _slug(index, label)
    if isinstance(config, Exception):
        return summary_row(label, overrides, reference, error=f"{type(config).__name__}: {config}")
    try:
        report, _ = run_task(config, directory)
        return summary_row(label, overrides, config, report)
    except Exception as exc:  # recorded per point; the sweep continues
        log.warning("sweep point %s failed: %s", label, exc)
        return summary_row(label, overrides, config, error=f"{type(exc).__name__}: {exc}")


def worker_count(default=1):
    value = os.environ.get(WORKERS_ENV)
    if not value:
        return default
    try:
        count = int(value)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {value!r}") from None
    if count < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {value!r}")
    return count


def run_sweep(config, output_directory=None, workers=None):
    """Run every sweep point in its own directory and write ``summary.csv``.

    Points run in ``workers`` separate processes when more than one is
    requested; rows keep the grid order and are normalised to the reference
    (first) row.
    """
    out = Path(output_directory or config.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, label, overrides, cfg, config, str(out)) for i, (label, overrides, cfg) in enumerate(sweep_points(config))]
    workers = workers or worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]
    normalise(rows)
    write_summary_csv(rows, out / "summary.csv")
    return rows
