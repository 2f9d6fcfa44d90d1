"""RWG and Buffa-Christiansen (BC) div-conforming spaces and pairing mass matrices.

Every space is stored as a sparse matrix ``coefficients`` of shape
``(3 * T_eval, N)`` that expands its basis functions in the local shape
functions of an evaluation mesh.  The local shape function attached to corner
``a`` of triangle ``t`` is::

    psi_{t,a}(x) = (x - v_a) / (2 * area_t),     div psi_{t,a} = 1 / area_t

It carries unit outward flux through the edge opposite ``v_a`` and has zero
normal component on the two other edges, so a coefficient equals the flux of
the field out of that triangle through that edge.

RWG functions live on the primal mesh.  For primal edge ``e = (p, q)`` with
``p < q``, the function flows from the triangle in which the edge is traversed
``p -> q`` into the other one; its normal component on ``e`` is 1 (divergence
``+-len(e)/area``).

BC functions live on the barycentric refinement.  The BC function of edge
``e`` has divergence ``len(e)/|C_p|`` on the dual cell ``C_p`` around ``p`` and
``-len(e)/|C_q|`` on ``C_q``; the flux ``len(e)`` leaves ``C_p`` through the
dual edge of ``e``, half through each of its two halves.  Inside a dual cell
the flux through the radial half-edge ``[p, mid(e)]`` is zero, and the fluxes
through the remaining radial edges follow by walking counter-clockwise around
the vertex and balancing each child triangle.  On a vertex of valence ``v``
with equal child areas this gives radial fluxes ``len(e) * (v - i) / (2v)``
(``i = 1..v-1`` counts primal edges from ``e``), the usual BC weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import BarycentricRefinement, MeshError, SurfaceMesh, barycentric_refine
from .quadrature import triangle_rule

__all__ = [
    "FunctionSpace",
    "MassMatrix",
    "build_rwg",
    "build_bc",
    "assemble_mass",
    "mass_solve",
    "local_shape_values",
]


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    kind: str  # "RWG" or "BC"
    mesh: SurfaceMesh  # primal mesh
    eval_mesh: SurfaceMesh  # mesh carrying the local shape functions
    coefficients: sp.csc_matrix  # (3 * eval_mesh.n_triangles, N)
    refinement: BarycentricRefinement | None = None

    @property
    def dof_count(self):
        return self.coefficients.shape[1]

    @cached_property
    def coefficients_csr(self):
        return self.coefficients.tocsr()

    @cached_property
    def dof_points(self):
        """Representative point per dof (midpoint of its primal edge)."""
        e = self.mesh.edges
        return 0.5 * (self.mesh.vertices[e[:, 0]] + self.mesh.vertices[e[:, 1]])

    @cached_property
    def dof_boxes(self):
        """Axis-aligned bounding box ``(lo, hi)`` of each basis function's support."""
        coeffs = self.coefficients
        corners = self.eval_mesh.corners
        lo = np.empty((self.dof_count, 3))
        hi = np.empty((self.dof_count, 3))
        for j in range(self.dof_count):
            rows = coeffs.indices[coeffs.indptr[j] : coeffs.indptr[j + 1]]
            pts = corners[np.unique(rows // 3)].reshape(-1, 3)
            lo[j] = pts.min(axis=0)
            hi[j] = pts.max(axis=0)
        return lo, hi

    def support(self, dof):
        """Evaluation-mesh triangles on which ``dof`` is nonzero."""
        c = self.coefficients
        rows = c.indices[c.indptr[dof] : c.indptr[dof + 1]]
        vals = c.data[c.indptr[dof] : c.indptr[dof + 1]]
        return np.unique(rows[vals != 0] // 3)

    def evaluate(self, dof, triangle, barycentric):
        """Value and surface divergence of basis ``dof`` at points of one evaluation triangle."""
        barycentric = np.atleast_2d(np.asarray(barycentric, dtype=float))
        col = self.coefficients[:, dof].toarray().ravel()
        coef = col[3 * triangle : 3 * triangle + 3]
        values, divs = local_shape_values(self.eval_mesh, triangle, barycentric)
        return np.einsum("a,pad->pd", coef, values), float(coef @ divs)


def local_shape_values(mesh, triangle, barycentric):
    """Local shapes of ``triangle`` at barycentric points: ``(n, 3, 3)`` values and divergences."""
    corners = mesh.corners[triangle]
    area = mesh.areas[triangle]
    x = np.asarray(barycentric) @ corners
    values = (x[:, None, :] - corners[None, :, :]) / (2.0 * area)
    return values, np.full(3, 1.0 / area)


def build_rwg(mesh):
    """RWG space: one dof per primal edge, flux 1 per unit length across the edge."""
    _check_closed(mesh)
    edges = mesh.edges
    et = mesh.edge_triangles
    el = mesh.edge_local_index
    lengths = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    tri = mesh.triangles
    rows, cols, vals = [], [], []
    for e in range(mesh.n_edges):
        p = edges[e, 0]
        t0, t1 = et[e]
        a0, a1 = el[e]
        # local edge a runs from corner a+1 to corner a+2 in ccw order
        if tri[t0, (a0 + 1) % 3] == p:
            plus, minus = (t0, a0), (t1, a1)
        else:
            plus, minus = (t1, a1), (t0, a0)
        rows += [3 * plus[0] + plus[1], 3 * minus[0] + minus[1]]
        cols += [e, e]
        vals += [lengths[e], -lengths[e]]
    coeffs = sp.csc_matrix((vals, (rows, cols)), shape=(3 * mesh.n_triangles, mesh.n_edges))
    coeffs.sort_indices()
    return FunctionSpace("RWG", mesh, mesh, coeffs)


def _check_closed(mesh):
    counts = mesh._edge_data[4]
    if np.any(counts != 2):
        raise MeshError("function spaces need a closed mesh (every edge shared by two triangles)")


def _refined_edge_lookup(refined):
    edges = refined.edges
    return {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}


def _edge_flux_entries(refined, lookup, t_from, v1, v2):
    """(row_from, row_to, to_triangle) for the refined edge (v1, v2) leaving ``t_from``."""
    e = lookup[(min(v1, v2), max(v1, v2))]
    (ta, tb), (la, lb) = refined.edge_triangles[e], refined.edge_local_index[e]
    if ta == t_from:
        return 3 * ta + la, 3 * tb + lb
    return 3 * tb + lb, 3 * ta + la


def build_bc(mesh, bary=None):
    """BC space on the barycentric refinement of ``mesh`` (one dof per primal edge)."""
    _check_closed(mesh)
    if bary is None:
        bary = barycentric_refine(mesh)
    if bary.primal is not mesh:
        same = (
            bary.primal.n_triangles == mesh.n_triangles
            and np.array_equal(bary.primal.triangles, mesh.triangles)
            and np.array_equal(bary.primal.vertices, mesh.vertices)
        )
        if not same:
            raise ValueError("barycentric refinement was not derived from this mesh")
    refined = bary.refined
    nv, ne = mesh.n_vertices, mesh.n_edges
    tri = mesh.triangles
    lookup = _refined_edge_lookup(refined)
    child_area = refined.areas
    edges = mesh.edges
    lengths = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)

    # position of primal vertex within each triangle and the triangle holding each directed edge
    directed = {}
    for t in range(mesh.n_triangles):
        for a in range(3):
            directed[(int(tri[t, a]), int(tri[t, (a + 1) % 3]))] = (t, a)

    # the two children at corner a: first adjacent to edge (a, a+1), second to (a, a-1)
    first_child = (0, 2, 4)
    second_child = (5, 1, 3)

    def fan(p, q):
        """Children around p counter-clockwise, starting after the half-edge [p, mid(p,q)].

        Returns child triangle ids and the far vertex of each radial edge
        separating consecutive children (midpoint or centroid index).
        """
        children, radial = [], []
        nxt = q
        while True:
            t, a = directed[(p, nxt)]
            children += [6 * t + first_child[a], 6 * t + second_child[a]]
            prev = int(tri[t, (a + 2) % 3])
            radial += [nv + ne + t, nv + _edge_index(p, prev)]
            nxt = prev
            if nxt == q:
                break
        return children, radial

    edge_index = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}

    def _edge_index(a, b):
        return edge_index[(min(a, b), max(a, b))]

    fans = {}
    rows, cols, vals = [], [], []
    for e in range(ne):
        p, q = int(edges[e, 0]), int(edges[e, 1])
        length = lengths[e]
        mid = nv + e
        for centre, other, sign in ((p, q, 1.0), (q, p, -1.0)):
            key = (centre, other)
            if key not in fans:
                fans[key] = fan(centre, other)
            children, radial = fans[key]
            cell_area = child_area[children].sum()
            n = len(children)
            flux = 0.0
            for j, child in enumerate(children):
                source = sign * length * child_area[child] / cell_area
                out = sign * 0.5 * length if j in (0, n - 1) else 0.0
                flux = flux + source - out
                if j < n - 1:
                    r_from, r_to = _edge_flux_entries(refined, lookup, child, centre, radial[j])
                    rows += [r_from, r_to]
                    cols += [e, e]
                    vals += [flux, -flux]
            if abs(flux) > 1e-9 * length:
                raise RuntimeError("BC flux balance failed around a vertex")
        # flux len/2 through each half of the dual edge, from C_p into C_q
        for t in (directed[(p, q)][0], directed[(q, p)][0]):
            g = nv + ne + t
            child_p = _child_with(refined, t, p, mid)
            r_from, r_to = _edge_flux_entries(refined, lookup, child_p, mid, g)
            rows += [r_from, r_to]
            cols += [e, e]
            vals += [0.5 * length, -0.5 * length]
    coeffs = sp.csc_matrix((vals, (rows, cols)), shape=(3 * refined.n_triangles, ne))
    coeffs.sum_duplicates()
    coeffs.sort_indices()
    return FunctionSpace("BC", mesh, refined, coeffs, bary)


def _child_with(refined, t, vertex, mid):
    for c in range(6):
        child = 6 * t + c
        verts = refined.triangles[child]
        if vertex in verts and mid in verts:
            return child
    raise RuntimeError("child triangle lookup failed")


def _rwg_on_refinement(space, bary):
    """Express an RWG space in local shapes of the barycentric refinement (exact)."""
    refined = bary.refined
    primal = space.mesh
    nt = primal.n_triangles
    # each child edge flux of a primal local shape: len(child edge) * psi(mid) . n_out
    rows, cols, vals = [], [], []
    rc = refined.corners
    rnormals = refined.normals
    for child in range(refined.n_triangles):
        t = child // 6
        pc = primal.corners[t]
        area = primal.areas[t]
        corners = rc[child]
        for b in range(3):
            a1, a2 = corners[(b + 1) % 3], corners[(b + 2) % 3]
            mid = 0.5 * (a1 + a2)
            outward = np.cross(a2 - a1, rnormals[child])  # length-scaled outward normal
            for a in range(3):
                flux = (mid - pc[a]) @ outward / (2.0 * area)
                rows.append(3 * child + b)
                cols.append(3 * t + a)
                vals.append(flux)
    prolong = sp.csr_matrix((vals, (rows, cols)), shape=(3 * refined.n_triangles, 3 * nt))
    coeffs = (prolong @ space.coefficients).tocsc()
    coeffs.eliminate_zeros()
    coeffs.sort_indices()
    return FunctionSpace(space.kind, space.mesh, refined, coeffs, bary)


def on_refinement(space, bary):
    """The same space expressed on the barycentric refinement."""
    if space.eval_mesh is bary.refined:
        return space
    if space.kind != "RWG":
        raise ValueError("only RWG spaces can be moved to the refinement")
    return _rwg_on_refinement(space, bary)


def _local_pairing(mesh):
    """Per-triangle 3x3 matrices ``L[a, b] = int psi_b . (n x psi_a)``."""
    rule = triangle_rule(2)
    corners = mesh.corners
    area = mesh.areas
    normals = mesh.normals
    x = np.einsum("qk,tkd->tqd", rule.barycentric, corners)
    psi = (x[:, :, None, :] - corners[:, None, :, :]) / (2.0 * area)[:, None, None, None]
    rot = np.cross(normals[:, None, None, :], psi)
    w = 2.0 * area[:, None] * rule.weights[None, :]
    local = np.einsum("tq,tqbd,tqad->tab", w, psi, rot)
    # the pairing is antisymmetric; enforce it against rounding so <b, b> = 0 exactly
    return 0.5 * (local - local.transpose(0, 2, 1))


@dataclass(eq=False)
class MassMatrix:
    """Sparse pairing matrix ``M[i, j] = <trial_j, test_i>`` with a cached LU factorization."""

    matrix: sp.csc_matrix
    test: FunctionSpace
    trial: FunctionSpace

    @cached_property
    def factorization(self):
        try:
            lu = spla.splu(self.matrix.tocsc().astype(complex))
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"mass matrix is singular: {exc}") from None
        return lu

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, rhs):
        return mass_solve(self, rhs)

    def condition_number(self):
        return np.linalg.cond(self.matrix.toarray())


def assemble_mass(test, trial):
    """Mass matrix of the antisymmetric pairing ``<a, b> = int a . (n x b)``."""
    if test.mesh is not trial.mesh and not (
        test.mesh.n_triangles == trial.mesh.n_triangles
        and np.array_equal(test.mesh.triangles, trial.mesh.triangles)
    ):
        raise ValueError("mass matrix needs test and trial spaces over the same primal mesh")
    if test.eval_mesh is not trial.eval_mesh:
        bary = test.refinement or trial.refinement
        if bary is None:
            raise ValueError("spaces live on incompatible evaluation meshes")
        test = on_refinement(test, bary)
        trial = on_refinement(trial, bary)
    mesh = test.eval_mesh
    local = _local_pairing(mesh)
    nt = mesh.n_triangles
    rows = np.repeat(np.arange(3 * nt).reshape(nt, 3), 3, axis=1).ravel()
    cols = np.tile(np.arange(3 * nt).reshape(nt, 3), (1, 3)).ravel()
    block = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(3 * nt, 3 * nt))
    matrix = (test.coefficients.T @ block @ trial.coefficients).tocsc()
    matrix.eliminate_zeros()
    return MassMatrix(matrix, test, trial)


def mass_solve(mass, rhs):
    rhs = np.asarray(rhs)
    if not np.any(rhs):
        return np.zeros(rhs.shape, dtype=complex)
    return mass.factorization.solve(rhs.astype(complex))
