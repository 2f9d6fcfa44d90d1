"""Galerkin boundary operators S (electric) and C (magnetic), traces and potentials.

Sign conventions.  Tangential traces are ``gamma_D E = E x n`` and
``gamma_N E = (1/ik) gamma_D (curl E)``; the pairing is the antisymmetric
``<a, b> = int a . (n x b)``.  With the potentials

    E v(x) = ik int G v - (1/ik) grad int G div v,      H v(x) = curl int G v

the operators are ``S = gamma_D E`` and ``C`` the principal value of
``gamma_D H``; their Galerkin matrices against local shapes are computed in
:mod:`calderon_bem.kernels`.  Cauchy data ``u = (gamma_D E, gamma_N E)`` of a
field radiating inside a scatterer satisfy ``[[C, S], [-S, C]] u = u / 2``.

Every application of an assembled operator to a vector goes through
:meth:`BoundaryOperatorMatrix.matvec` and is tallied by :data:`BIO_COUNTER`.
"""

from __future__ import annotations

import math
import threading
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit, prange

from . import kernels
from .geometry import barycentric_refine
from .hmatrix import HParams, assemble_hmatrix, build_cluster_tree
from .quadrature import PairClass, QuadOrders, sauter_schwab_rule, triangle_rule
from .spaces import FunctionSpace, assemble_mass, build_bc, build_rwg, mass_solve

__all__ = [
    "Medium",
    "BioCounter",
    "BIO_COUNTER",
    "green",
    "GalerkinEvaluator",
    "BoundaryOperatorMatrix",
    "assemble_operators",
    "assemble_S",
    "assemble_C",
    "TraceData",
    "plane_wave_traces",
    "CalderonReport",
    "verify_calderon",
    "potentials",
    "evaluate_fields",
]


@dataclass(frozen=True)
class Medium:
    """Homogeneous medium described by its wavenumber and relative permeability."""

    k: complex
    mu: complex = 1.0

    def __post_init__(self):
        k = complex(self.k)
        if k == 0:
            raise ValueError("wavenumber must be nonzero")
        if k.imag < 0:
            raise ValueError(f"wavenumber must have Im(k) >= 0, got {k}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "mu", complex(self.mu))


class BioCounter:
    """Thread-safe tally of boundary-operator applications."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n=1):
        with self._lock:
            self._count += n

    @property
    def count(self):
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0

    @contextmanager
    def measure(self):
        """Context yielding a dict whose ``"count"`` is the increase inside the block."""
        result = {"count": 0}
        start = self._count
        try:
            yield result
        finally:
            result["count"] = self._count - start


BIO_COUNTER = BioCounter()


def green(k, x, y):
    """Helmholtz fundamental solution ``exp(ik|x-y|) / (4 pi |x-y|)``."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    if np.any(r == 0.0):
        raise ValueError("Green's function is singular at x == y")
    return np.exp(1j * complex(k) * r) / (4.0 * np.pi * r)


# ---------------------------------------------------------------------------
# block evaluation


def _rule_arrays(orders):
    arrays = []
    for order in (orders.near, orders.medium, orders.far):
        rule = triangle_rule(order)
        arrays += [np.ascontiguousarray(rule.barycentric), np.ascontiguousarray(rule.weights)]
    tb, sb, w, offsets = [], [], [], [0]
    for cls in (PairClass.IDENTICAL, PairClass.SHARED_EDGE, PairClass.SHARED_VERTEX):
        rule = sauter_schwab_rule(cls, orders.singular)
        tb.append(rule.test_barycentric)
        sb.append(rule.trial_barycentric)
        w.append(rule.weights)
        offsets.append(offsets[-1] + rule.size)
    arrays += [
        np.ascontiguousarray(np.concatenate(tb)),
        np.ascontiguousarray(np.concatenate(sb)),
        np.ascontiguousarray(np.concatenate(w)),
        np.asarray(offsets, dtype=np.int64),
    ]
    return arrays


def _support_matrix(space, dofs):
    """Triangles supporting ``dofs`` and the compacted coefficient block."""
    sub = space.coefficients[:, dofs]
    rows = sub.indices
    tris = np.unique(rows // 3)
    new_rows = 3 * np.searchsorted(tris, rows // 3) + rows % 3
    compact = sp.csc_matrix((sub.data, new_rows, sub.indptr), shape=(3 * len(tris), len(dofs)))
    return tris, compact


class GalerkinEvaluator:
    """Evaluates arbitrary blocks of the S and C Galerkin matrices."""

    def __init__(self, test, trial, k, orders=QuadOrders()):
        self.test = test
        self.trial = trial
        self.k = complex(k)
        self.orders = orders
        self.same_mesh = test.eval_mesh is trial.eval_mesh
        self._rules = _rule_arrays(orders)
        tm, sm = test.eval_mesh, trial.eval_mesh
        self._test_mesh = (tm.vertices, tm.triangles, tm.normals, tm.areas)
        self._trial_mesh = (sm.vertices, sm.triangles, sm.normals, sm.areas)

    def local(self, test_tris, trial_tris, kinds=("S", "C")):
        tv, tt, tn, ta = self._test_mesh
        sv, st, sn, sa = self._trial_mesh
        out_s, out_c, err = kernels.local_matrices(
            tv, tt, tn, ta, np.ascontiguousarray(test_tris, dtype=np.int64),
            sv, st, sn, sa, np.ascontiguousarray(trial_tris, dtype=np.int64),
            self.same_mesh, self.k, "S" in kinds, "C" in kinds, *self._rules,
        )
        if err:
            raise ValueError("triangles of different meshes touch; off-diagonal blocks need disjoint scatterers")
        return {"S": out_s, "C": out_c}

    def block(self, rows, cols, kinds=("S", "C")):
        """Dense Galerkin sub-blocks ``[rows][:, cols]`` for each requested kind."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        ttris, tcoef = _support_matrix(self.test, rows)
        stris, scoef = _support_matrix(self.trial, cols)
        local = self.local(ttris, stris, kinds)
        out = {}
        for kind in kinds:
            right = (scoef.T @ local[kind].T).T  # (3 nt, len(cols))
            out[kind] = np.asarray(tcoef.T @ right)
        return out

    def dense(self, kinds=("S", "C"), chunk_bytes=64 * 2**20):
        """Full dense matrices, accumulated over chunks of test triangles."""
        n, m = self.test.dof_count, self.trial.dof_count
        out = {kind: np.zeros((n, m), dtype=complex) for kind in kinds}
        nt = self.test.eval_mesh.n_triangles
        ns = self.trial.eval_mesh.n_triangles
        test_rows = self.test.coefficients_csr
        scoef = self.trial.coefficients
        per_triangle = 9 * ns * 16 * len(kinds)
        step = max(1, int(chunk_bytes // per_triangle))
        trial_all = np.arange(ns)
        # both kernels are symmetric under exchange of test and trial triangles,
        # so with identical spaces only the upper triangle of pairs is computed
        symmetric = self.test is self.trial
        scoef_rows = self.trial.coefficients_csr
        for start in range(0, nt, step):
            stop = min(nt, start + step)
            tris = np.arange(start, stop)
            tcoef = test_rows[3 * start : 3 * stop]
            if not symmetric:
                local = self.local(tris, trial_all, kinds)
                for kind in kinds:
                    out[kind] += tcoef.T @ (scoef.T @ local[kind].T).T
                continue
            local = self.local(tris, np.arange(start, ns), kinds)
            upper = scoef_rows[3 * stop :]
            for kind in kinds:
                diag = local[kind][:, : 3 * (stop - start)]
                out[kind] += tcoef.T @ (tcoef.T @ diag.T).T
                if stop < ns:
                    off = tcoef.T @ (upper.T @ local[kind][:, 3 * (stop - start) :].T).T
                    out[kind] += off + off.T
        return out


# ---------------------------------------------------------------------------
# operator objects


@dataclass(eq=False)
class BoundaryOperatorMatrix:
    """Discrete S or C between two spaces, backed by a dense array or an H-matrix."""

    kind: str
    k: complex
    test: FunctionSpace
    trial: FunctionSpace
    storage: object  # ndarray or HMatrix
    orders: QuadOrders
    hparams: HParams | None = None
    assembly_time: float = 0.0
    counter: BioCounter = field(default=BIO_COUNTER, repr=False)

    @property
    def shape(self):
        if self.test is None or self.trial is None:
            return tuple(self.storage.shape)
        return (self.test.dof_count, self.trial.dof_count)

    @property
    def is_dense(self):
        return isinstance(self.storage, np.ndarray)

    @property
    def stored_entries(self):
        if self.is_dense:
            return int(self.storage.size)
        return int(self.storage.stored_entries)

    @property
    def compression_ratio(self):
        return self.stored_entries / float(self.shape[0] * self.shape[1])

    @property
    def provenance(self):
        nu = None if self.hparams is None else self.hparams.nu
        chi = None if self.hparams is None else self.hparams.chi
        q = None if self.orders is None else list(self.orders.as_tuple())
        return {"kind": self.kind, "nu": nu, "chi": chi, "q": q}

    def matvec(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"{self.kind} operator expects length {self.shape[1]}, got {x.shape[0]}")
        self.counter.add(1 if x.ndim == 1 else x.shape[1])
        if self.is_dense:
            return self.storage @ x
        return self.storage.matvec(x)

    __matmul__ = matvec

    def to_dense(self):
        return self.storage.copy() if self.is_dense else self.storage.to_dense()


def assemble_operators(test, trial, medium, orders=QuadOrders(), mode=None, kinds=("S", "C")):
    """Assemble the requested operators between two spaces in one pass.

    ``mode`` is ``None``/``"dense"`` for dense storage or an :class:`HParams`
    for hierarchical storage.
    """
    k = medium.k if isinstance(medium, Medium) else complex(medium)
    evaluator = GalerkinEvaluator(test, trial, k, orders)
    result = {}
    if mode is None or mode == "dense":
        start = time.perf_counter()
        mats = evaluator.dense(kinds)
        elapsed = (time.perf_counter() - start) / len(kinds)
        for kind in kinds:
            result[kind] = BoundaryOperatorMatrix(kind, k, test, trial, mats[kind], orders, None, elapsed)
        return result
    if not isinstance(mode, HParams):
        raise ValueError(f"unknown assembly mode {mode!r}")
    row_tree = build_cluster_tree(*test.dof_boxes, leaf_size=mode.leaf_size)
    col_tree = build_cluster_tree(*trial.dof_boxes, leaf_size=mode.leaf_size)
    for kind in kinds:
        start = time.perf_counter()
        H = assemble_hmatrix(
            lambda r, c, kind=kind: evaluator.block(r, c, (kind,))[kind], row_tree, col_tree, mode
        )
        elapsed = time.perf_counter() - start
        result[kind] = BoundaryOperatorMatrix(kind, k, test, trial, H, orders, mode, elapsed)
    return result


def assemble_S(test, trial, medium, orders=QuadOrders(), mode=None):
    return assemble_operators(test, trial, medium, orders, mode, ("S",))["S"]


def assemble_C(test, trial, medium, orders=QuadOrders(), mode=None):
    return assemble_operators(test, trial, medium, orders, mode, ("C",))["C"]


# ---------------------------------------------------------------------------
# incident traces


@dataclass(eq=False)
class TraceData:
    """Dirichlet trace ``gamma_D E`` and scaled Neumann trace ``(k/mu) gamma_N E``.

    ``*_tested`` hold pairings against the dual space, ``*_coefficients`` the
    expansion in the primal space obtained from them.
    """

    dirichlet_tested: np.ndarray
    neumann_tested: np.ndarray
    dirichlet_coefficients: np.ndarray
    neumann_coefficients: np.ndarray

    @property
    def coefficients(self):
        return np.concatenate([self.dirichlet_coefficients, self.neumann_coefficients])


def plane_wave(direction, polarization, k, points):
    """Field ``p exp(ik d.x)`` and its curl at ``points``."""
    d = np.asarray(direction, dtype=float)
    p = np.asarray(polarization, dtype=complex)
    phase = np.exp(1j * complex(k) * (np.asarray(points) @ d))
    E = phase[:, None] * p[None, :]
    curl = 1j * complex(k) * np.cross(d, p)[None, :] * phase[:, None]
    return E, curl


def _check_wave(direction, polarization):
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-10:
        raise ValueError("propagation direction must be a unit vector")
    if abs(np.dot(d, np.asarray(polarization, dtype=complex))) > 1e-10 * max(
        1.0, np.linalg.norm(polarization)
    ):
        raise ValueError("polarization must be orthogonal to the propagation direction")


def tested_trace(space_dual, func, order):
    """Pairings ``<u, dual_i> = int u . (n x dual_i)`` for a vector field ``u = func(points, normals)``."""
    mesh = space_dual.eval_mesh
    rule = triangle_rule(order)
    corners = mesh.corners
    pts = np.einsum("qk,tkd->tqd", rule.barycentric, corners)
    normals = np.repeat(mesh.normals[:, None, :], rule.size, axis=1)
    u = func(pts.reshape(-1, 3), normals.reshape(-1, 3)).reshape(pts.shape)
    psi = (pts[:, :, None, :] - corners[:, None, :, :]) / (2.0 * mesh.areas)[:, None, None, None]
    rot = np.cross(normals[:, :, None, :], psi)
    w = 2.0 * mesh.areas[:, None] * rule.weights[None, :]
    local = np.einsum("tq,tqd,tqad->ta", w, u, rot).ravel()
    return space_dual.coefficients.T @ local


def plane_wave_traces(direction, polarization, medium_e, space, dual=None, order=None, orders=None):
    """Incident traces of ``E = p exp(ik_e d.x)`` on ``space`` (tested against ``dual``).

    The quadrature order defaults to the far-field order of ``orders``.
    """
    _check_wave(direction, polarization)
    if dual is None:
        dual = build_bc(space.mesh, space.refinement or barycentric_refine(space.mesh))
    if order is None:
        order = (orders or QuadOrders()).far
    k = medium_e.k
    scale = k / medium_e.mu

    def dirichlet(points, normals):
        E, _ = plane_wave(direction, polarization, k, points)
        return np.cross(E, normals)

    def neumann(points, normals):
        _, curl = plane_wave(direction, polarization, k, points)
        return scale / (1j * k) * np.cross(curl, normals)

    gd = tested_trace(dual, dirichlet, order)
    gn = tested_trace(dual, neumann, order)
    mass = assemble_mass(dual, space)
    return TraceData(gd, gn, mass_solve(mass, gd), mass_solve(mass, gn))


# ---------------------------------------------------------------------------
# Calderon identities


@dataclass
class CalderonReport:
    r1: float
    r2: float
    dofs: int
    samples: int
    vectors: str = "smooth"


def _random_tangential_trace(rng, k, rwg, bc, m_p):
    """RWG coefficients of the tangential trace of a random plane wave."""
    d = rng.standard_normal(3)
    d /= np.linalg.norm(d)
    p = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    p -= d * (d @ p)

    def trace(points, normals):
        E, _ = plane_wave(d, p, k, points)
        return np.cross(E, normals)

    return mass_solve(m_p, tested_trace(bc, trace, 6))


def verify_calderon(mesh, medium, orders=QuadOrders(), samples=10, seed=0, zero_s=False, vectors="smooth"):
    """Residuals of ``S^2 + I/4 - C^2`` and ``CS + SC`` averaged over sample vectors.

    ``vectors="smooth"`` draws traces of random plane waves at the medium's
    wavenumber, which are resolved by the mesh; ``"random"`` draws i.i.d.
    complex coefficients, whose mesh-scale oscillations the discrete
    identities do not capture, so those residuals stall under refinement.
    """
    if vectors not in ("smooth", "random"):
        raise ValueError(f"vectors must be 'smooth' or 'random', got {vectors!r}")
    rwg = build_rwg(mesh)
    bary = barycentric_refine(mesh)
    bc = build_bc(mesh, bary)
    ops_r = assemble_operators(rwg, rwg, medium, orders)
    ops_b = assemble_operators(bc, bc, medium, orders)
    m_a = assemble_mass(rwg, bc)
    m_p = assemble_mass(bc, rwg)
    S_r, C_r = ops_r["S"].storage, ops_r["C"].storage
    S_b, C_b = ops_b["S"].storage, ops_b["C"].storage
    if zero_s:
        S_r = np.zeros_like(S_r)
        S_b = np.zeros_like(S_b)

    def product(P, A, x):
        return mass_solve(m_p, P @ mass_solve(m_a, A @ x))

    k = medium.k if isinstance(medium, Medium) else complex(medium)
    rng = np.random.default_rng(seed)
    r1, r2 = [], []
    for _ in range(samples):
        if vectors == "smooth":
            x = _random_tangential_trace(rng, k.real, rwg, bc, m_p)
        else:
            x = rng.standard_normal(rwg.dof_count) + 1j * rng.standard_normal(rwg.dof_count)
        res1 = product(S_b, S_r, x) + 0.25 * x - product(C_b, C_r, x)
        res2 = product(C_b, S_r, x) + product(S_b, C_r, x)
        r1.append(np.linalg.norm(res1) / np.linalg.norm(x))
        r2.append(np.linalg.norm(res2) / np.linalg.norm(x))
    return CalderonReport(float(np.mean(r1)), float(np.mean(r2)), rwg.dof_count, samples, vectors)


# ---------------------------------------------------------------------------
# potentials and field evaluation


@njit(parallel=True, cache=True)
def _potential_kernel(points, corners, areas, local_coef, k, bary, weights, max_level, near_factor):
    """Per point: (int G v, int grad_x G div v, int grad_x G x v) over all triangles."""
    npts = points.shape[0]
    nt = corners.shape[0]
    out = np.zeros((npts, 3, 3), np.complex128)
    nq = weights.shape[0]
    for i in prange(npts):
        x = points[i]
        for t in range(nt):
            c = local_coef[t]
            pt = corners[t]
            area = areas[t]
            div = (c[0] + c[1] + c[2]) / area
            # explicit stack of sub-triangles in barycentric coordinates of t
            stack = np.empty((4 * max_level + 4, 3, 3))
            levels = np.empty(4 * max_level + 4, np.int64)
            stack[0] = np.eye(3)
            levels[0] = 0
            top = 1
            while top > 0:
                top -= 1
                sub = stack[top].copy()
                lev = levels[top]
                verts = sub @ pt
                centre = (verts[0] + verts[1] + verts[2]) / 3.0
                diam = 0.0
                for a in range(3):
                    dd = 0.0
                    for d in range(3):
                        dd += (verts[a, d] - verts[(a + 1) % 3, d]) ** 2
                    diam = max(diam, np.sqrt(dd))
                dist = np.sqrt(((x - centre) ** 2).sum())
                if dist < near_factor * diam and lev < max_level:
                    m01 = 0.5 * (sub[0] + sub[1])
                    m12 = 0.5 * (sub[1] + sub[2])
                    m20 = 0.5 * (sub[2] + sub[0])
                    for child in range(4):
                        if child == 0:
                            stack[top, 0], stack[top, 1], stack[top, 2] = sub[0], m01, m20
                        elif child == 1:
                            stack[top, 0], stack[top, 1], stack[top, 2] = m01, sub[1], m12
                        elif child == 2:
                            stack[top, 0], stack[top, 1], stack[top, 2] = m20, m12, sub[2]
                        else:
                            stack[top, 0], stack[top, 1], stack[top, 2] = m12, m20, m01
                        levels[top] = lev + 1
                        top += 1
                    continue
                scale = 0.25**lev * 2.0 * area
                for q in range(nq):
                    lam = bary[q, 0] * sub[0] + bary[q, 1] * sub[1] + bary[q, 2] * sub[2]
                    y = lam[0] * pt[0] + lam[1] * pt[1] + lam[2] * pt[2]
                    v = np.zeros(3, np.complex128)
                    for a in range(3):
                        v += c[a] * (y - pt[a]) / (2.0 * area)
                    rv = x - y
                    r = np.sqrt((rv**2).sum())
                    e = np.exp(1j * k * r)
                    g = e / (4.0 * np.pi * r)
                    kk = e * (1j * k * r - 1.0) / (4.0 * np.pi * r**3)
                    w = weights[q] * scale
                    for d in range(3):
                        out[i, 0, d] += w * g * v[d]
                        out[i, 1, d] += w * kk * rv[d] * div
                    out[i, 2, 0] += w * kk * (rv[1] * v[2] - rv[2] * v[1])
                    out[i, 2, 1] += w * kk * (rv[2] * v[0] - rv[0] * v[2])
                    out[i, 2, 2] += w * kk * (rv[0] * v[1] - rv[1] * v[0])
    return out


def potentials(space, coefficients, k, points, order=6, max_level=6, near_factor=2.0):
    """Electric and magnetic potentials ``(E v, H v)`` of the density ``sum c_j phi_j``."""
    mesh = space.eval_mesh
    local = (space.coefficients @ np.asarray(coefficients, dtype=complex)).reshape(-1, 3)
    rule = triangle_rule(order)
    k = complex(k)
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    m = _potential_kernel(
        points, np.ascontiguousarray(mesh.corners), mesh.areas, np.ascontiguousarray(local),
        k, np.ascontiguousarray(rule.barycentric), np.ascontiguousarray(rule.weights),
        max_level, near_factor,
    )
    e_pot = 1j * k * m[:, 0] - m[:, 1] / (1j * k)
    h_pot = m[:, 2]
    return e_pot, h_pot


def point_surface_distance(mesh, points):
    """Distance from each point to the nearest triangle of ``mesh`` (exact point-triangle distance)."""
    points = np.atleast_2d(points)
    corners = mesh.corners
    best = np.full(points.shape[0], np.inf)
    for t in range(mesh.n_triangles):
        best = np.minimum(best, _point_triangle_distance(points, corners[t]))
    return best


def _point_triangle_distance(p, tri):
    a, b, c = tri
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    n2 = n @ n
    ap = p - a
    v = (np.cross(ap, ac) @ n) / n2
    w = (np.cross(ab, ap) @ n) / n2
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)
    proj = a + v[:, None] * ab + w[:, None] * ac
    d_in = np.linalg.norm(p - proj, axis=1)

    def seg(p0, p1):
        e = p1 - p0
        s = np.clip(((p - p0) @ e) / (e @ e), 0.0, 1.0)
        return np.linalg.norm(p - (p0 + s[:, None] * e), axis=1)

    d_edge = np.minimum(np.minimum(seg(a, b), seg(b, c)), seg(c, a))
    return np.where(inside, d_in, d_edge)


def winding_number(mesh, points):
    """Generalised winding number of a closed oriented mesh (1 inside, 0 outside)."""
    points = np.atleast_2d(points)
    total = np.zeros(points.shape[0])
    for tri in mesh.corners:
        a = tri[0] - points
        b = tri[1] - points
        c = tri[2] - points
        la, lb, lc = (np.linalg.norm(v, axis=1) for v in (a, b, c))
        num = np.einsum("ij,ij->i", a, np.cross(b, c))
        den = (
            la * lb * lc
            + np.einsum("ij,ij->i", a, b) * lc
            + np.einsum("ij,ij->i", b, c) * la
            + np.einsum("ij,ij->i", c, a) * lb
        )
        total += 2.0 * np.arctan2(num, den)
    return total / (4.0 * np.pi)


def evaluate_fields(
    spaces, dirichlet, neumann, media, points, side, exterior=None, incident=None, min_distance=None
):
    """Electric field from surface traces by the Stratton-Chu representation.

    ``spaces``/``dirichlet``/``neumann``: per-scatterer RWG spaces and the RWG
    coefficients of ``gamma_D E`` and of ``gamma_N E`` (unscaled).  ``side`` is
    ``"exterior"`` or an interior scatterer index.  For the exterior, the
    scattered field ``-sum_m (H gamma_D + E gamma_N)`` is returned, plus the
    incident field when ``incident`` is given as ``(direction, polarization)``.
    Returns ``(field, warning_mask)`` where the mask flags points closer than
    ``min_distance`` to any surface.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    field = np.zeros((points.shape[0], 3), dtype=complex)
    flags = np.zeros(points.shape[0], dtype=bool)
    for m, space in enumerate(spaces):
        if min_distance is not None:
            flags |= point_surface_distance(space.mesh, points) < min_distance
    if flags.any():
        warnings.warn(f"{int(flags.sum())} evaluation points lie close to a surface", RuntimeWarning)
    if side == "exterior":
        k = exterior.k
        for m, space in enumerate(spaces):
            e_pot, _ = potentials(space, neumann[m], k, points)
            _, h_pot = potentials(space, dirichlet[m], k, points)
            field -= h_pot + e_pot
        if incident is not None:
            field += plane_wave(incident[0], incident[1], k, points)[0]
        return field, flags
    m = int(side)
    k = media[m].k
    e_pot, _ = potentials(spaces[m], neumann[m], k, points)
    _, h_pot = potentials(spaces[m], dirichlet[m], k, points)
    return h_pot + e_pot, flags
