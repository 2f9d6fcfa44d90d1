"""Versioned JSON run reports, residual CSV files and sweep summaries."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

REPORT_FORMAT = "calderon-bem-report"
REPORT_VERSION = 1

REQUIRED = {
    "solve": ("problem", "variant", "parameters", "solve", "matvecs", "times", "memory", "operators"),
    "compress": ("problem", "parameters", "compression", "times"),
}

SUMMARY_COLUMNS = [
    "label", "status", "k_e", "variant", "nu_P", "chi_P", "q_P", "dofs", "iterations", "converged",
    "matvecs", "predicted_matvecs", "stored_entries_A", "stored_entries_P", "memory_bytes_P",
    "compression_ratio_P", "time_assembly_A", "time_assembly_P", "time_solve",
    "iterations_rel", "matvecs_rel", "memory_P_rel", "time_total_rel", "error",
]


class ReportError(ValueError):
    """A report file that does not follow the documented schema."""


def jsonable(value):
    """Recursively convert numpy and complex values into JSON-compatible ones."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value") and hasattr(value, "name"):  # enums
        return value.value
    return value


def _params_dict(params):
    return {
        "nu": params.nu,
        "chi": params.chi,
        "orders": list(params.orders.as_tuple()),
        "dense": params.dense,
        "leaf_size": params.leaf_size,
    }


def _problem_dict(config, problem, disc=None):
    from .scenarios import size_parameter

    out = {
        "scatterers": problem.n_scatterers,
        "k_e": config.k_e,
        "h": config.h,
        "refractive_indices": [problem.refractive_index(m) for m in range(problem.n_scatterers)],
        "triangles": problem.mesh.n_triangles,
        "size_parameter": size_parameter(problem.mesh, config.k_e),
        "direction": list(problem.direction),
        "polarization": list(problem.polarization),
    }
    if disc is not None:
        out["dofs_per_scatterer"] = disc.sizes
        out["total_dofs"] = disc.total_dofs
    return out


def _operator_entries(blocked):
    if blocked is None:
        return []
    rows = []
    for op in blocked.distinct_operators():
        entry = dict(op.provenance)
        entry.update(
            operator=blocked.label,
            shape=list(op.shape),
            stored_entries=op.stored_entries,
            compression_ratio=op.compression_ratio,
            assembly_time=op.assembly_time,
            storage="dense" if op.is_dense else "hmatrix",
        )
        rows.append(entry)
    return rows


def solve_report(config, solution, extra=None):
    """Report dictionary for a solved scenario."""
    rep = solution.report
    memory = dict(rep.memory)
    memory["total_bytes"] = memory["A"]["bytes"] + memory["P"]["bytes"]
    out = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "task": "solve",
        "config": config.source,
        "problem": _problem_dict(config, solution.problem, solution.disc),
        "variant": solution.variant.value,
        "parameters": {
            "operator": _params_dict(config.params.for_operator),
            "preconditioner": _params_dict(config.params.for_preconditioner),
            "gmres": asdict(config.gmres),
        },
        "solve": {
            "iterations": rep.iterations,
            "converged": rep.converged,
            "final_residual": rep.final_residual,
            "residuals": rep.residuals,
            "breakdown": rep.breakdown,
        },
        "matvecs": {
            "instrumented": rep.bio_matvecs,
            "predicted": solution.predicted_matvecs,
            "match": solution.matvecs_match,
            "per_application": solution.A.matvecs_per_application
            + (0 if solution.P is None else solution.P.matvecs_per_application),
            "right_hand_side": solution.rhs_matvecs,
        },
        "times": rep.times,
        "memory": memory,
        "operators": _operator_entries(solution.A) + _operator_entries(solution.P),
    }
    if extra:
        out.update(extra)
    return jsonable(out)


def compress_report(config, problem, op, elapsed):
    stats = op.storage.statistics() if not op.is_dense else {
        "stored_entries": op.stored_entries, "compression_ratio": 1.0
    }
    return jsonable(
        {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "task": "compress",
            "config": config.source,
            "problem": _problem_dict(config, problem),
            "parameters": {"operator": _params_dict(config.params.for_preconditioner)},
            "compression": {
                "operator": "S",
                "space": "RWG",
                "dofs": op.shape[0],
                "stored_entries": op.stored_entries,
                "memory_bytes": 16 * op.stored_entries,
                "compression_ratio": op.compression_ratio,
                "statistics": stats,
            },
            "times": {"assembly": elapsed},
        }
    )


def write_report(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def read_report(path):
    """Load a report and check its format, version and required sections."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from None
    if data.get("format") != REPORT_FORMAT:
        raise ReportError(f"{path}: not a {REPORT_FORMAT} file")
    if data.get("version") != REPORT_VERSION:
        raise ReportError(f"{path}: unsupported report version {data.get('version')!r}")
    task = data.get("task")
    if task not in REQUIRED:
        raise ReportError(f"{path}: unknown task {task!r}")
    missing = [key for key in REQUIRED[task] if key not in data]
    if missing:
        raise ReportError(f"{path}: missing sections {missing}")
    if task == "solve":
        solve = data["solve"]
        if len(solve["residuals"]) != solve["iterations"] + 1:
            raise ReportError(f"{path}: residual history length does not match the iteration count")
    return data


def decode_float(value):
    """Inverse of the infinity/NaN encoding used in reports."""
    if isinstance(value, str):
        return float(value)
    return value


def write_residual_csv(residuals, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "relative_residual"])
        for i, r in enumerate(residuals):
            writer.writerow([i, f"{r:.16e}"])
    return path


def summary_row(label, overrides, config, report=None, error=None):
    pre = config.params.for_preconditioner
    row = {
        "label": label,
        "status": "ok" if error is None else "failed",
        "k_e": config.k_e,
        "variant": config.variant.value,
        "nu_P": pre.nu,
        "chi_P": pre.chi,
        "q_P": " ".join(str(q) for q in pre.orders.as_tuple()),
        "error": "" if error is None else str(error),
    }
    if report is None:
        return row
    if report["task"] == "compress":
        comp = report["compression"]
        row.update(
            dofs=comp["dofs"],
            stored_entries_P=comp["stored_entries"],
            memory_bytes_P=comp["memory_bytes"],
            compression_ratio_P=comp["compression_ratio"],
            time_assembly_P=report["times"]["assembly"],
        )
        return row
    mem = report["memory"]
    ratios = mem["P"]["compression_ratios"]
    row.update(
        dofs=report["problem"].get("total_dofs"),
        iterations=report["solve"]["iterations"],
        converged=report["solve"]["converged"],
        matvecs=report["matvecs"]["instrumented"],
        predicted_matvecs=report["matvecs"]["predicted"],
        stored_entries_A=mem["A"]["stored_entries"],
        stored_entries_P=mem["P"]["stored_entries"],
        memory_bytes_P=mem["P"]["bytes"],
        compression_ratio_P=(sum(ratios) / len(ratios)) if ratios else "",
        time_assembly_A=report["times"].get("assembly_A"),
        time_assembly_P=report["times"].get("assembly_P"),
        time_solve=report["times"].get("solve"),
    )
    return row


def _total_time(row):
    return sum(float(row.get(k) or 0.0) for k in ("time_assembly_A", "time_assembly_P", "time_solve"))


def normalise(rows, reference=0):
    """Add ``*_rel`` columns relative to row ``reference`` (blank where undefined)."""
    if not rows:
        return rows
    ref = rows[reference]
    pairs = {
        "iterations_rel": "iterations",
        "matvecs_rel": "matvecs",
        "memory_P_rel": "stored_entries_P",
    }
    for row in rows:
        for rel, key in pairs.items():
            a, b = row.get(key), ref.get(key)
            row[rel] = a / b if isinstance(a, (int, float)) and isinstance(b, (int, float)) and b else ""
        ta, tb = _total_time(row), _total_time(ref)
        row["time_total_rel"] = ta / tb if tb else ""
    return rows


def write_summary_csv(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: jsonable(row.get(k, "")) for k in SUMMARY_COLUMNS})
    return path
