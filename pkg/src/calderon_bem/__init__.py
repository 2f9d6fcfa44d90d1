"""Boundary-element solver for multi-scatterer electromagnetic transmission problems.

PMCHWT formulation on RWG spaces with reduced Calderon preconditioners on
Buffa-Christiansen spaces, dense or hierarchical-matrix assembly with
separate parameters for the operator and the preconditioner, and a restarted
GMRES whose operator applications are counted exactly.
"""

from .geometry import SurfaceMesh, barycentric_refine, combine, generate_cube, generate_sphere, load_mesh, save_mesh
from .hmatrix import HParams
from .operators import BIO_COUNTER, Medium, assemble_C, assemble_S, evaluate_fields, plane_wave_traces, verify_calderon
from .pmchwt import (
    BiparametricParams,
    Discretization,
    OperatorParams,
    TransmissionProblem,
    Variant,
    assemble_A,
    assemble_P,
    predicted_matvecs,
    solve_problem,
)
from .quadrature import QuadOrders
from .solver import GmresParams, gmres
from .spaces import assemble_mass, build_bc, build_rwg

__all__ = [
    "SurfaceMesh",
    "barycentric_refine",
    "combine",
    "generate_cube",
    "generate_sphere",
    "load_mesh",
    "save_mesh",
    "HParams",
    "BIO_COUNTER",
    "Medium",
    "assemble_C",
    "assemble_S",
    "evaluate_fields",
    "plane_wave_traces",
    "verify_calderon",
    "BiparametricParams",
    "Discretization",
    "OperatorParams",
    "TransmissionProblem",
    "Variant",
    "assemble_A",
    "assemble_P",
    "predicted_matvecs",
    "solve_problem",
    "QuadOrders",
    "GmresParams",
    "gmres",
    "assemble_mass",
    "build_bc",
    "build_rwg",
]
