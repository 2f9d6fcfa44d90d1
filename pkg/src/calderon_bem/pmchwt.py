"""Multi-scatterer PMCHWT system, reduced Calderon preconditioners and the composed map.

Unknowns are ordered per scatterer ``m`` as ``[gamma_D E^s, (k_e/mu_e) gamma_N E^s]``
expanded in the RWG space of ``Gamma_m``.  The system operator has diagonal
blocks ``A^e_m + A^i_m`` and off-diagonal couplings ``A_ml`` with

    A_m = [[C, (mu/k) S], [-(k/mu) S, C]]

evaluated with the interior or exterior medium.  Preconditioners reuse the
same block structure discretised on BC spaces.  The discrete preconditioned
operator is ``M_P^-1 P M_A^-1 A`` with ``M_A[i, j] = <BC_j, RWG_i>`` and
``M_P[i, j] = <RWG_j, BC_i>``.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import SurfaceMesh, barycentric_refine
from .hmatrix import HParams
from .operators import (
    BIO_COUNTER,
    BoundaryOperatorMatrix,
    Medium,
    assemble_operators,
    plane_wave_traces,
)
from .quadrature import QuadOrders
from .solver import GmresParams, SolveReport, gmres
from .spaces import assemble_mass, build_bc, build_rwg

__all__ = [
    "Variant",
    "OperatorParams",
    "BiparametricParams",
    "TransmissionProblem",
    "Discretization",
    "BlockedOperator",
    "assemble_A",
    "assemble_P",
    "assemble_rhs",
    "PreconditionedMap",
    "preconditioned_map",
    "predicted_matvecs",
    "matvecs_per_application",
    "TransmissionSolution",
    "solve_problem",
    "synthetic_system",
]


class Variant(str, enum.Enum):
    NONE = "None"
    FULL_A = "FullA"
    D = "D"
    DI = "Di"
    DE = "De"
    SI = "Si"
    SE = "Se"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for v in cls:
            if v.value.lower() == str(value).lower():
                return v
        raise ValueError(f"unknown preconditioner variant {value!r}; choose from {[v.value for v in cls]}")


@dataclass(frozen=True)
class OperatorParams:
    """Assembly parameters of one side of the bi-parametric scheme."""

    nu: float = 1e-3
    chi: float = math.inf
    orders: QuadOrders = QuadOrders()
    dense: bool = True
    leaf_size: int = 32

    def __post_init__(self):
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"nu must lie in (0, 1), got {self.nu}")
        if not self.chi >= 0.0:
            raise ValueError(f"chi must be >= 0 or infinity, got {self.chi}")

    @property
    def mode(self):
        if self.dense:
            return None
        return HParams(self.nu, self.chi, self.leaf_size)


@dataclass(frozen=True)
class BiparametricParams:
    for_operator: OperatorParams = OperatorParams()
    for_preconditioner: OperatorParams = OperatorParams()


@dataclass(eq=False)
class TransmissionProblem:
    """Scatterers of ``mesh`` (one per scatterer id) with their media, plus the incident wave."""

    mesh: SurfaceMesh
    interior: list
    exterior: Medium
    direction: tuple = (1.0, 0.0, 0.0)
    polarization: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.mesh.n_triangles == 0:
            raise ValueError("problem needs at least one scatterer")
        if len(self.interior) != self.mesh.n_scatterers:
            raise ValueError(
                f"{self.mesh.n_scatterers} scatterers but {len(self.interior)} interior media given"
            )
        for medium in self.interior:
            n = medium.k / self.exterior.k
            if not np.isfinite(n):
                raise ValueError("refractive index must be finite")

    @property
    def n_scatterers(self):
        return self.mesh.n_scatterers

    def refractive_index(self, m):
        return self.interior[m].k / self.exterior.k


@dataclass(eq=False)
class ScattererSpaces:
    mesh: SurfaceMesh
    rwg: object
    bc: object
    mass_A: object  # test RWG, trial BC
    mass_P: object  # test BC, trial RWG
    mass_RR: object  # test RWG, trial RWG


class Discretization:
    """Per-scatterer spaces and mass matrices of a problem."""

    def __init__(self, problem):
        self.problem = problem
        self.scatterers = []
        for m in range(problem.n_scatterers):
            sub = problem.mesh.submesh(m)
            bary = barycentric_refine(sub)
            rwg = build_rwg(sub)
            bc = build_bc(sub, bary)
            self.scatterers.append(
                ScattererSpaces(sub, rwg, bc, assemble_mass(rwg, bc), assemble_mass(bc, rwg), assemble_mass(rwg, rwg))
            )

    @property
    def sizes(self):
        return [s.rwg.dof_count for s in self.scatterers]

    @cached_property
    def block_sizes(self):
        return [n for n in self.sizes for _ in range(2)]

    @property
    def total_dofs(self):
        return sum(self.block_sizes)

    def split(self, x):
        offsets = np.cumsum([0] + self.block_sizes)
        return [x[offsets[i] : offsets[i + 1]] for i in range(len(self.block_sizes))]

    def mass_solve(self, which, x):
        """Block-diagonal mass solve (``which`` in ``"A"``, ``"P"``)."""
        parts = self.split(x)
        out = []
        for b, part in enumerate(parts):
            spaces = self.scatterers[b // 2]
            mass = spaces.mass_A if which == "A" else spaces.mass_P
            out.append(mass.solve(part))
        return np.concatenate(out)

    def mass_apply(self, x):
        """Block-diagonal RWG-RWG pairing matrix applied to ``x``."""
        parts = self.split(x)
        return np.concatenate([self.scatterers[b // 2].mass_RR.matrix @ p for b, p in enumerate(parts)])


@dataclass(eq=False)
class BlockedOperator:
    """``2M x 2M`` grid of weighted references to shared boundary-operator matrices."""

    block_sizes: list
    grid: dict  # (row, col) -> list of (weight, BoundaryOperatorMatrix)
    label: str = ""
    assembly_time: float = 0.0
    interior_grid: dict = field(default_factory=dict)

    @property
    def shape(self):
        n = sum(self.block_sizes)
        return (n, n)

    def distinct_operators(self):
        seen = {}
        for terms in self.grid.values():
            for _, op in terms:
                seen[id(op)] = op
        return list(seen.values())

    @property
    def n_distinct(self):
        return len(self.distinct_operators())

    @property
    def matvecs_per_application(self):
        return sum(len(terms) for terms in self.grid.values())

    @property
    def stored_entries(self):
        return sum(op.stored_entries for op in self.distinct_operators())

    def compression_ratios(self):
        return [op.compression_ratio for op in self.distinct_operators()]

    def matvec(self, x):
        offsets = np.cumsum([0] + list(self.block_sizes))
        y = np.zeros(offsets[-1], dtype=complex)
        for (r, c) in sorted(self.grid):
            xc = x[offsets[c] : offsets[c + 1]]
            for weight, op in self.grid[(r, c)]:
                y[offsets[r] : offsets[r + 1]] += weight * op.matvec(xc)
        return y

    __call__ = matvec

    def to_dense(self):
        offsets = np.cumsum([0] + list(self.block_sizes))
        out = np.zeros(self.shape, dtype=complex)
        for (r, c), terms in self.grid.items():
            for weight, op in terms:
                out[offsets[r] : offsets[r + 1], offsets[c] : offsets[c + 1]] += weight * op.to_dense()
        return out


def _add_transmission_block(grid, m, l, C, S, medium, antidiagonal_only=False):
    """Add ``[[C, (mu/k) S], [-(k/mu) S, C]]`` at scatterer block ``(m, l)``."""
    r, c = 2 * m, 2 * l
    ratio = medium.mu / medium.k
    if not antidiagonal_only:
        grid.setdefault((r, c), []).append((1.0, C))
        grid.setdefault((r + 1, c + 1), []).append((1.0, C))
    grid.setdefault((r, c + 1), []).append((ratio, S))
    grid.setdefault((r + 1, c), []).append((-1.0 / ratio, S))


def _layout(M, make_ops, include_interior, include_exterior, couple, s_only):
    """Block grid of a PMCHWT-type operator.

    ``make_ops(m, l, side)`` returns ``(ops, medium)`` for scatterer block
    ``(m, l)`` with ``side`` in ``"exterior"``/``"interior"``, where ``ops``
    maps ``"S"`` (and ``"C"`` unless ``s_only``) to operator matrices.
    """
    grid = {}
    interior_grid = {}
    for m in range(M):
        for include, side in ((include_exterior, "exterior"), (include_interior, "interior")):
            if not include:
                continue
            ops, medium = make_ops(m, m, side)
            _add_transmission_block(grid, m, m, ops.get("C"), ops["S"], medium, s_only)
            if side == "interior":
                _add_transmission_block(interior_grid, m, m, ops.get("C"), ops["S"], medium, s_only)
    if couple:
        for m in range(M):
            for l in range(M):
                if m != l:
                    ops, medium = make_ops(m, l, "exterior")
                    _add_transmission_block(grid, m, l, ops.get("C"), ops["S"], medium, s_only)
    return grid, interior_grid


def _build(problem, disc, space_attr, params, include_interior, include_exterior, couple, s_only, label):
    start = time.perf_counter()
    kinds = ("S",) if s_only else ("S", "C")

    def make_ops(m, l, side):
        medium = problem.exterior if side == "exterior" else problem.interior[m]
        test = getattr(disc.scatterers[m], space_attr)
        trial = getattr(disc.scatterers[l], space_attr)
        try:
            ops = assemble_operators(test, trial, medium, params.orders, params.mode, kinds)
        except Exception as exc:
            raise RuntimeError(f"assembly of block ({m}, {l}) failed: {exc}") from exc
        return ops, medium

    grid, interior_grid = _layout(
        problem.n_scatterers, make_ops, include_interior, include_exterior, couple, s_only
    )
    return BlockedOperator(disc.block_sizes, grid, label, time.perf_counter() - start, interior_grid)


def synthetic_system(variant, M, n=3, seed=0):
    """``(A, P, block_sizes)`` with the block layout of ``variant`` but random dense operators.

    Used to check operator-application accounting without any assembly.
    """
    variant = Variant.parse(variant)
    rng = np.random.default_rng(seed)
    exterior = Medium(1.0)
    interior = Medium(1.5)
    sizes = [n] * (2 * M)

    def factory(s_only):
        kinds = ("S",) if s_only else ("S", "C")

        def make_ops(m, l, side):
            medium = exterior if side == "exterior" else interior
            ops = {}
            for kind in kinds:
                mat = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
                ops[kind] = BoundaryOperatorMatrix(kind, medium.k, None, None, mat / n, None)
            return ops, medium

        return make_ops

    grid, interior_grid = _layout(M, factory(False), True, True, True, False)
    A = BlockedOperator(sizes, grid, "A", 0.0, interior_grid)
    P = None
    if variant is not Variant.NONE:
        layout = _VARIANT_LAYOUT[variant]
        grid, _ = _layout(M, factory(layout[3]), *layout)
        P = BlockedOperator(sizes, grid, variant.value)
    return A, P, sizes


def assemble_A(problem, params=OperatorParams(), disc=None):
    """PMCHWT operator on RWG spaces (``4M + 2M(M-1)`` distinct operators)."""
    disc = disc or Discretization(problem)
    A = _build(problem, disc, "rwg", params, True, True, True, False, "A")
    M = problem.n_scatterers
    expected = 4 * M + 2 * M * (M - 1)
    if A.n_distinct != expected:
        raise AssertionError(f"A holds {A.n_distinct} distinct operators, expected {expected}")
    return A


_VARIANT_LAYOUT = {
    # (interior, exterior, off-diagonal coupling, S only)
    Variant.FULL_A: (True, True, True, False),
    Variant.D: (True, True, False, False),
    Variant.DI: (True, False, False, False),
    Variant.DE: (False, True, False, False),
    Variant.SI: (True, False, False, True),
    Variant.SE: (False, True, False, True),
}


def assemble_P(variant, problem, params=OperatorParams(), disc=None):
    """Preconditioner on BC spaces; ``None`` for the mass-only variant."""
    variant = Variant.parse(variant)
    if variant is Variant.NONE:
        return None
    disc = disc or Discretization(problem)
    return _build(problem, disc, "bc", params, *_VARIANT_LAYOUT[variant], variant.value)


def interior_part(A):
    """The block-diagonal interior operator contained in ``A`` (shares its matrices)."""
    return BlockedOperator(A.block_sizes, A.interior_grid, "Di")


def assemble_rhs(problem, A, disc, orders=None):
    """Right-hand side ``<(I/2 - D^i) u^inc, RWG_i>`` and the incident coefficients.

    The incident traces are expanded in RWG via the BC-tested projection; the
    interior operator reuses the matrices inside ``A`` (4M operator applications).
    """
    orders = orders or QuadOrders()
    coeffs = []
    for s in disc.scatterers:
        tr = plane_wave_traces(
            problem.direction, problem.polarization, problem.exterior, s.rwg, dual=s.bc, order=orders.far
        )
        coeffs += [tr.dirichlet_coefficients, tr.neumann_coefficients]
    c = np.concatenate(coeffs)
    Di = interior_part(A)
    b = 0.5 * disc.mass_apply(c) - Di.matvec(c)
    return b, c


def matvecs_per_application(variant, M):
    variant = Variant.parse(variant)
    base = 4 * M * M + 4 * M
    extra = {
        Variant.NONE: 0,
        Variant.FULL_A: 4 * M * M + 4 * M,
        Variant.D: 8 * M,
        Variant.DI: 4 * M,
        Variant.DE: 4 * M,
        Variant.SI: 2 * M,
        Variant.SE: 2 * M,
    }[variant]
    return base + extra


def predicted_matvecs(variant, M, R, rho):
    """Closed-form operator-application count of a preconditioned GMRES solve."""
    variant = Variant.parse(variant)
    if M < 1 or R < 0 or rho < 1:
        raise ValueError("need M >= 1, R >= 0 and rho >= 1")
    apps = R + R // rho
    per = matvecs_per_application(variant, M)
    premultiply = per - (4 * M * M + 4 * M)
    return per * apps + premultiply


@dataclass(eq=False)
class PreconditionedMap:
    """``x -> M_P^-1 P M_A^-1 A x`` (``M_A^-1 A x`` without a preconditioner)."""

    A: BlockedOperator
    P: BlockedOperator | None
    mass_solve_A: object
    mass_solve_P: object
    applications: int = 0

    @property
    def shape(self):
        return self.A.shape

    def apply_preconditioner(self, y):
        z = self.mass_solve_A(y)
        if self.P is None:
            return z
        return self.mass_solve_P(self.P.matvec(z))

    def __call__(self, x):
        self.applications += 1
        return self.apply_preconditioner(self.A.matvec(x))

    matvec = __call__

    def prepare_rhs(self, b):
        """Preconditioned right-hand side (one application of ``P``)."""
        return self.apply_preconditioner(np.asarray(b, dtype=complex))

    @property
    def matvecs_per_application(self):
        return self.A.matvecs_per_application + (0 if self.P is None else self.P.matvecs_per_application)


def preconditioned_map(P, A, disc):
    for op in (A, P):
        if op is not None and list(op.block_sizes) != list(disc.block_sizes):
            raise ValueError(f"operator {op.label} block sizes do not match the discretization")
    return PreconditionedMap(A, P, lambda x: disc.mass_solve("A", x), lambda x: disc.mass_solve("P", x))


def _operator_memory(op):
    if op is None:
        return {"stored_entries": 0, "bytes": 0, "compression_ratios": []}
    entries = int(op.stored_entries)
    return {
        "stored_entries": entries,
        "bytes": 16 * entries,
        "compression_ratios": [float(r) for r in op.compression_ratios()],
        "distinct_operators": op.n_distinct,
        "matvecs_per_application": op.matvecs_per_application,
    }


@dataclass(eq=False)
class TransmissionSolution:
    """Solved problem: coefficients, operators and the instrumented solve report."""

    problem: TransmissionProblem
    disc: Discretization
    variant: Variant
    A: BlockedOperator
    P: BlockedOperator | None
    report: object  # SolveReport
    incident: np.ndarray
    rhs_matvecs: int
    predicted_matvecs: int

    @classmethod
    def from_coefficients(cls, problem, disc, variant, coefficients, incident):
        """Solution rebuilt from saved vectors (no operators, no solve history)."""
        coefficients = np.asarray(coefficients, dtype=complex)
        if coefficients.shape != (disc.total_dofs,) or np.shape(incident) != (disc.total_dofs,):
            raise ValueError(f"saved vectors do not have {disc.total_dofs} entries")
        report = SolveReport(coefficients, 0, True, [0.0], 0)
        return cls(problem, disc, Variant.parse(variant), None, None, report, np.asarray(incident), 0, 0)

    @property
    def coefficients(self):
        return self.report.solution

    @property
    def matvecs_match(self):
        return self.report.bio_matvecs == self.predicted_matvecs

    def traces(self, m):
        """``(gamma_D, gamma_N)`` RWG coefficients of the scattered field on scatterer ``m``."""
        parts = self.disc.split(self.coefficients)
        scale = self.problem.exterior.mu / self.problem.exterior.k
        return parts[2 * m], scale * parts[2 * m + 1]


def solve_problem(problem, variant="D", params=BiparametricParams(), gmres_params=GmresParams(), disc=None):
    """Assemble and solve the preconditioned system for ``problem``.

    Operator applications are counted for the preconditioned right-hand side
    and the GMRES iterations; those spent on the incident-field right-hand
    side itself are reported separately as ``rhs_matvecs``.
    """
    variant = Variant.parse(variant)
    times = {}
    start = time.perf_counter()
    disc = disc or Discretization(problem)
    times["discretization"] = time.perf_counter() - start
    A = assemble_A(problem, params.for_operator, disc)
    times["assembly_A"] = A.assembly_time
    with BIO_COUNTER.measure() as rhs_count:
        b, incident = assemble_rhs(problem, A, disc, params.for_operator.orders)
    P = assemble_P(variant, problem, params.for_preconditioner, disc)
    times["assembly_P"] = 0.0 if P is None else P.assembly_time
    pmap = preconditioned_map(P, A, disc)
    with BIO_COUNTER.measure() as solve_count:
        rhs = pmap.prepare_rhs(b)
        report = gmres(pmap, rhs, gmres_params)
    report.bio_matvecs = solve_count["count"]
    times.update(report.times)
    report.times = times
    report.memory = {"A": _operator_memory(A), "P": _operator_memory(P)}
    predicted = predicted_matvecs(variant, problem.n_scatterers, report.iterations, gmres_params.restart)
    return TransmissionSolution(
        problem, disc, variant, A, P, report, incident, rhs_count["count"], predicted
    )
