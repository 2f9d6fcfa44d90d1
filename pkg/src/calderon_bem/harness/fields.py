"""Field grids on axis-aligned planes.

Output CSV columns: ``x, y, z, re_Ex, im_Ex, re_Ey, im_Ey, re_Ez, im_Ez,
E2, region, near_surface``.  ``region`` is ``exterior`` or the index of the
scatterer containing the point; ``near_surface`` is 1 for points closer to a
surface than the flag distance, where the representation is least accurate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..operators import evaluate_fields, point_surface_distance, winding_number

FIELD_COLUMNS = [
    "x", "y", "z", "re_Ex", "im_Ex", "re_Ey", "im_Ey", "re_Ez", "im_Ez", "E2", "region", "near_surface",
]
AXES = "xyz"


@dataclass(frozen=True)
class Plane:
    axis: int  # index of the fixed coordinate
    offset: float

    @classmethod
    def parse(cls, text):
        """Read ``"y=0.2"`` style specifications."""
        try:
            name, value = text.replace(" ", "").split("=")
            axis = AXES.index(name.lower())
            return cls(axis, float(value))
        except ValueError:
            raise ValueError(f"plane must look like 'y=0.2', got {text!r}") from None

    @property
    def in_plane_axes(self):
        return [a for a in range(3) if a != self.axis]

    def grid(self, extent, resolution):
        """Points of a regular ``resolution = (n_u, n_v)`` grid over ``extent = (u0, u1, v0, v1)``."""
        u0, u1, v0, v1 = extent
        nu, nv = resolution
        if nu < 1 or nv < 1:
            raise ValueError("resolution must be positive")
        u = np.linspace(u0, u1, nu)
        v = np.linspace(v0, v1, nv)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        points = np.empty((uu.size, 3))
        a, b = self.in_plane_axes
        points[:, a] = uu.ravel()
        points[:, b] = vv.ravel()
        points[:, self.axis] = self.offset
        return points


def default_extent(mesh, plane, margin=0.5):
    lo, hi = mesh.bounding_box()
    a, b = plane.in_plane_axes
    return (lo[a] - margin, hi[a] + margin, lo[b] - margin, hi[b] + margin)


def classify_regions(mesh, points):
    """``-1`` outside every scatterer, otherwise the scatterer index."""
    region = np.full(points.shape[0], -1)
    for m in range(mesh.n_scatterers):
        inside = winding_number(mesh.submesh(m), points) > 0.5
        region[inside] = m
    return region


def total_traces(solution):
    """Per-scatterer total exterior traces ``(gamma_D, gamma_N)`` as RWG coefficients.

    ``gamma_N`` is unscaled (the solution stores ``(k_e/mu_e) gamma_N``).
    """
    disc, problem = solution.disc, solution.problem
    scale = problem.exterior.mu / problem.exterior.k
    incident = disc.split(solution.incident)
    dirichlet, neumann = [], []
    for m in range(problem.n_scatterers):
        gd, gn = solution.traces(m)
        dirichlet.append(gd + incident[2 * m])
        neumann.append(gn + scale * incident[2 * m + 1])
    return dirichlet, neumann


def interior_traces(solution, m):
    """Interior traces of scatterer ``m`` from the transmission conditions.

    Tangential ``E`` is continuous and so is ``(1/mu) curl E x n``; with
    ``gamma_N = curl E x n / (ik)`` that gives
    ``gamma_N^i = (mu_m k_e) / (k_m mu_e) gamma_N^e``.
    """
    dirichlet, neumann = total_traces(solution)
    problem = solution.problem
    inner, outer = problem.interior[m], problem.exterior
    factor = (inner.mu * outer.k) / (inner.k * outer.mu)
    return dirichlet[m], factor * neumann[m]


def evaluate_solution(solution, points, min_distance=None):
    """Total field at ``points`` using the representation of the region each point lies in.

    Returns ``(field, region, near_surface)``.
    """
    problem = solution.problem
    points = np.atleast_2d(np.asarray(points, dtype=float))
    region = classify_regions(problem.mesh, points)
    spaces = [s.rwg for s in solution.disc.scatterers]
    media = problem.interior
    field = np.zeros((points.shape[0], 3), dtype=complex)
    near = np.zeros(points.shape[0], dtype=bool)
    if min_distance is not None:
        near = point_surface_distance(problem.mesh, points) < min_distance
    outside = region < 0
    if outside.any():
        scattered_d = [solution.traces(m)[0] for m in range(problem.n_scatterers)]
        scattered_n = [solution.traces(m)[1] for m in range(problem.n_scatterers)]
        field[outside], _ = evaluate_fields(
            spaces, scattered_d, scattered_n, media, points[outside], "exterior",
            exterior=problem.exterior, incident=(problem.direction, problem.polarization),
        )
    for m in range(problem.n_scatterers):
        mask = region == m
        if not mask.any():
            continue
        gd, gn = interior_traces(solution, m)
        d = [None] * problem.n_scatterers
        n = [None] * problem.n_scatterers
        d[m], n[m] = gd, gn
        field[mask], _ = evaluate_fields(spaces, d, n, media, points[mask], m)
    return field, region, near


def write_field_csv(points, field, region, near, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FIELD_COLUMNS)
        e2 = (np.abs(field) ** 2).sum(axis=1)
        for p, e, s, r, f in zip(points, field, e2, region, near):
            writer.writerow(
                [f"{p[0]:.10g}", f"{p[1]:.10g}", f"{p[2]:.10g}"]
                + [f"{v:.10e}" for c in e for v in (c.real, c.imag)]
                + [f"{s:.10e}", "exterior" if r < 0 else int(r), int(bool(f))]
            )
    return path


def field_grid(solution, plane, extent=None, resolution=(41, 41), min_distance=None):
    """Evaluate the field on a plane grid; returns ``(points, field, region, near)``."""
    plane = plane if isinstance(plane, Plane) else Plane.parse(plane)
    extent = extent or default_extent(solution.problem.mesh, plane)
    points = plane.grid(extent, resolution)
    field, region, near = evaluate_solution(solution, points, min_distance)
    return points, field, region, near


def tangential_jump(solution, point, normal, offset):
    """Jump of tangential ``E`` across the surface at ``point``, relative to the local ``|E|``.

    Each side is extrapolated linearly to the surface from ``offset`` and
    ``2 offset`` along ``normal``, which removes the first-order change of
    the field over the straddle distance.
    """
    point = np.asarray(point, dtype=float)
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    pts = np.array([point - s * offset * normal for s in (1, 2, -1, -2)])
    field, _, _ = evaluate_solution(solution, pts)
    inner = 2 * field[0] - field[1]
    outer = 2 * field[2] - field[3]

    def tangential(e):
        return e - normal * (normal @ e)

    return float(np.linalg.norm(tangential(inner - outer)) / np.linalg.norm(outer))
