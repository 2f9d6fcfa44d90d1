"""Triangulated scatterer surfaces: generation, barycentric refinement and I/O.

A :class:`SurfaceMesh` holds one or more closed scatterer boundaries.  Every
triangle carries the id of the scatterer it belongs to; triangles are oriented
counter-clockwise when seen from the exterior, so the normals point outwards.

The native ASCII format is::

    mesh-v1 <V> <T> <M>
    v x y z          (V lines)
    t i j k s        (T lines, 0-based vertex indices, scatterer id s)

``#`` starts a comment.  Gmsh ASCII v2 files holding triangles are also read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "MeshParseError",
    "SurfaceMesh",
    "BarycentricRefinement",
    "generate_cube",
    "generate_sphere",
    "barycentric_refine",
    "combine",
    "load_mesh",
    "save_mesh",
    "triangles_intersect",
]


class MeshError(ValueError):
    """Raised for meshes violating the closed-manifold or disjointness rules."""

    def __init__(self, message, offending_edges=()):
        super().__init__(message)
        self.offending_edges = list(offending_edges)


class MeshParseError(ValueError):
    def __init__(self, message, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Oriented surface triangulation of ``M`` scatterers.

    Geometric per-triangle data (``areas``, ``normals``, ``centroids``,
    ``diameters``) is computed on construction; the edge structure is built
    lazily.  Instances are immutable.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    scatterer_ids: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        ids = np.asarray(self.scatterer_ids, dtype=np.int64).reshape(-1)
        if ids.shape[0] != triangles.shape[0]:
            raise MeshError("one scatterer id per triangle is required")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle references a vertex index out of range")
        object.__setattr__(self, "vertices", _readonly(vertices))
        object.__setattr__(self, "triangles", _readonly(triangles))
        object.__setattr__(self, "scatterer_ids", _readonly(ids))

        corners = vertices[triangles]
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        twice_area = np.linalg.norm(cross, axis=1)
        if np.any(twice_area <= 0.0):
            bad = np.flatnonzero(twice_area <= 0.0)
            raise MeshError(f"degenerate triangles (zero area): {bad[:10].tolist()}")
        lengths = np.linalg.norm(corners - np.roll(corners, -1, axis=1), axis=2)
        object.__setattr__(self, "areas", _readonly(0.5 * twice_area))
        object.__setattr__(self, "normals", _readonly(cross / twice_area[:, None]))
        object.__setattr__(self, "centroids", _readonly(corners.mean(axis=1)))
        object.__setattr__(self, "diameters", _readonly(lengths.max(axis=1)))

    # --- basic sizes -----------------------------------------------------
    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_scatterers(self):
        return int(self.scatterer_ids.max()) + 1 if self.n_triangles else 0

    @property
    def corners(self):
        """Triangle corner coordinates, shape ``(T, 3, 3)``."""
        return self.vertices[self.triangles]

    @property
    def max_edge_length(self):
        return float(self.diameters.max())

    # --- edge structure ------------------------------------------------------
    @cached_property
    def _edge_data(self):
        tri = self.triangles
        # local edge a is opposite local vertex a
        a = np.stack([tri[:, 1], tri[:, 2], tri[:, 0]], axis=1)
        b = np.stack([tri[:, 2], tri[:, 0], tri[:, 1]], axis=1)
        lo = np.minimum(a, b).ravel()
        hi = np.maximum(a, b).ravel()
        keys = np.stack([lo, hi], axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        triangle_edges = inverse.reshape(-1, 3)
        edge_triangles = np.full((len(edges), 2), -1, dtype=np.int64)
        edge_local = np.full((len(edges), 2), -1, dtype=np.int64)
        slot = np.zeros(len(edges), dtype=np.int64)
        for flat, e in enumerate(inverse):
            s = slot[e]
            if s < 2:
                edge_triangles[e, s] = flat // 3
                edge_local[e, s] = flat % 3
            slot[e] += 1
        return edges, triangle_edges, edge_triangles, edge_local, counts

    @property
    def edges(self):
        """Unique edges ``(E, 2)`` with ``edges[:, 0] < edges[:, 1]``."""
        return self._edge_data[0]

    @property
    def triangle_edges(self):
        """Edge index of local edge ``a`` (opposite local vertex ``a``), ``(T, 3)``."""
        return self._edge_data[1]

    @property
    def edge_triangles(self):
        """The two triangles sharing each edge, ``(E, 2)``."""
        return self._edge_data[2]

    @property
    def edge_local_index(self):
        """Local index (opposite vertex) of each edge inside ``edge_triangles``."""
        return self._edge_data[3]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    # --- sub-meshes ------------------------------------------------------------
    def triangles_of(self, scatterer):
        return np.flatnonzero(self.scatterer_ids == scatterer)

    def submesh(self, scatterer):
        """Mesh of a single scatterer with compacted vertex numbering (id 0)."""
        sel = self.triangles_of(scatterer)
        used, inv = np.unique(self.triangles[sel], return_inverse=True)
        return SurfaceMesh(self.vertices[used], inv.reshape(-1, 3), np.zeros(len(sel), dtype=np.int64))

    def bounding_box(self, scatterer=None):
        if scatterer is None:
            pts = self.vertices
        else:
            pts = self.vertices[np.unique(self.triangles[self.triangles_of(scatterer)])]
        return pts.min(axis=0), pts.max(axis=0)

    # --- validation --------------------------------------------------------------
    def validate(self):
        """Check closedness, orientation and disjointness; raise :class:`MeshError`."""
        if self.n_triangles == 0:
            raise MeshError("mesh has no triangles")
        ids = np.unique(self.scatterer_ids)
        if ids[0] != 0 or ids[-1] != len(ids) - 1:
            raise MeshError(f"scatterer ids must be 0..M-1, got {ids.tolist()}")
        tri = self.triangles
        directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        owner = np.tile(self.scatterer_ids, 3)
        bad = []
        keys, counts = np.unique(directed, axis=0, return_counts=True)
        dup = keys[counts > 1]
        bad.extend(tuple(sorted(map(int, e))) for e in dup)
        dset = set(map(tuple, directed.tolist()))
        for i, j in directed.tolist():
            if (j, i) not in dset:
                bad.append(tuple(sorted((i, j))))
        _, counts_u = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
        if bad or np.any(counts_u != 2):
            und, cnt = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
            bad.extend(tuple(map(int, e)) for e in und[cnt != 2])
            bad = sorted(set(bad))
            raise MeshError(
                f"mesh is not a closed oriented manifold; {len(bad)} offending edges, "
                f"e.g. {bad[:8]}",
                bad,
            )
        # an edge shared by triangles of different scatterers means they touch
        sorted_dir = np.sort(directed, axis=1)
        _, inv = np.unique(sorted_dir, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        first = np.full(inv.max() + 1, -1)
        for e, s in zip(inv, owner):
            if first[e] == -1:
                first[e] = s
            elif first[e] != s:
                raise MeshError("an edge is shared between two scatterers")
        self._check_disjoint()
        return self

    def _check_disjoint(self):
        m = self.n_scatterers
        verts_of = [np.unique(self.triangles[self.triangles_of(s)]) for s in range(m)]
        for a in range(m):
            for b in range(a + 1, m):
                if np.intersect1d(verts_of[a], verts_of[b]).size:
                    raise MeshError(f"scatterers {a} and {b} share vertices")
                lo_a, hi_a = self.bounding_box(a)
                lo_b, hi_b = self.bounding_box(b)
                if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
                    continue
                ta = self.triangles_of(a)
                tb = self.triangles_of(b)
                ca, cb = self.corners[ta], self.corners[tb]
                amin, amax = ca.min(axis=1), ca.max(axis=1)
                bmin, bmax = cb.min(axis=1), cb.max(axis=1)
                for i in range(len(ta)):
                    cand = np.flatnonzero(
                        np.all(amin[i] <= bmax, axis=1) & np.all(bmin <= amax[i], axis=1)
                    )
                    for j in cand:
                        if triangles_intersect(ca[i], cb[j]):
                            raise MeshError(
                                f"scatterers {a} and {b} intersect "
                                f"(triangles {int(ta[i])} and {int(tb[j])})"
                            )


def triangles_intersect(t1, t2, eps=1e-12):
    """Separating-axis test for two closed triangles (touching counts as intersecting)."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    e1 = np.roll(t1, -1, axis=0) - t1
    e2 = np.roll(t2, -1, axis=0) - t2
    n1 = np.cross(e1[0], e1[1])
    n2 = np.cross(e2[0], e2[1])
    axes = [n1, n2]
    axes += [np.cross(a, b) for a in e1 for b in e2]
    axes += [np.cross(n1, a) for a in e1] + [np.cross(n2, b) for b in e2]
    scale = max(np.abs(t1).max(), np.abs(t2).max(), 1.0)
    for ax in axes:
        norm = np.linalg.norm(ax)
        if norm < 1e-14 * scale * scale:
            continue
        ax = ax / norm
        p1 = t1 @ ax
        p2 = t2 @ ax
        if p1.max() < p2.min() - eps * scale or p2.max() < p1.min() - eps * scale:
            return False
    return True


@dataclass(frozen=True, eq=False)
class BarycentricRefinement:
    """Six-fold refinement of a primal mesh.

    Child ``6*t + c`` of primal triangle ``t`` is, for primal corners
    ``(v0, v1, v2)`` with edge midpoints ``m01, m12, m20`` and centroid ``g``::

        c=0: (v0, m01, g)   c=1: (m01, v1, g)   c=2: (v1, m12, g)
        c=3: (m12, v2, g)   c=4: (v2, m20, g)   c=5: (m20, v0, g)

    Refined vertices are numbered primal vertices first, then one midpoint
    per primal edge (``V + edge``), then one centroid per triangle
    (``V + E + t``).
    """

    primal: SurfaceMesh
    refined: SurfaceMesh
    parent: np.ndarray  # (6T, 2): (primal triangle, child index)

    @property
    def n_children(self):
        return 6


# primal corner touched by each child (in primal local numbering)
CHILD_PRIMAL_CORNER = np.array([0, 1, 1, 2, 2, 0])


def barycentric_refine(mesh):
    """Split every triangle into six through its centroid and edge midpoints."""
    nv, ne, nt = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    tri = mesh.triangles
    tedge = mesh.triangle_edges
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    verts = np.concatenate([mesh.vertices, mids, mesh.centroids])
    m01 = nv + tedge[:, 2]
    m12 = nv + tedge[:, 0]
    m20 = nv + tedge[:, 1]
    g = nv + ne + np.arange(nt)
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    children = np.stack(
        [
            np.stack([v0, m01, g], axis=1),
            np.stack([m01, v1, g], axis=1),
            np.stack([v1, m12, g], axis=1),
            np.stack([m12, v2, g], axis=1),
            np.stack([v2, m20, g], axis=1),
            np.stack([m20, v0, g], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)
    ids = np.repeat(mesh.scatterer_ids, 6)
    parent = np.stack([np.repeat(np.arange(nt), 6), np.tile(np.arange(6), nt)], axis=1)
    refined = SurfaceMesh(verts, children, ids)
    return BarycentricRefinement(mesh, refined, _readonly(parent))


# --- generators --------------------------------------------------------------------

# (u axis, v axis, fixed axis, fixed at max?) with u x v = outward normal
_CUBE_FACES = [
    (2, 1, 0, False),
    (1, 2, 0, True),
    (0, 2, 1, False),
    (2, 0, 1, True),
    (1, 0, 2, False),
    (0, 1, 2, True),
]


def generate_cube(side, origin=(0.0, 0.0, 0.0), h=None, scatterer_id=0, jitter=0.0, seed=0):
    """Axis-aligned cube with ``ceil(side/h)`` subdivisions per edge.

    ``origin`` is the corner with the smallest coordinates.  Each face is a
    structured grid of squares split into two triangles, giving
    ``12 * ceil(side/h)**2`` triangles.

    ``jitter`` (a fraction of the grid spacing, below 0.5) moves every vertex
    randomly along the coordinates in which it is not on the cube boundary.
    This keeps the surface exact but breaks the grid regularity, which is
    useful when distances between element groups should not be quantised.
    """
    if not side > 0:
        raise ValueError(f"cube side must be positive, got {side}")
    if h is None:
        h = side
    if not h > 0:
        raise ValueError(f"mesh size h must be positive, got {h}")
    if not 0.0 <= jitter < 0.5:
        raise ValueError(f"jitter must lie in [0, 0.5), got {jitter}")
    n = max(1, int(math.ceil(side / h - 1e-12)))
    origin = np.asarray(origin, dtype=float)
    rng = np.random.default_rng(seed)
    index = {}
    verts = []

    def vid(ijk):
        key = tuple(ijk)
        if key not in index:
            index[key] = len(verts)
            grid = np.asarray(key, dtype=float)
            if jitter:
                shift = rng.uniform(-jitter, jitter, 3)
                interior = (grid > 0) & (grid < n)
                grid = grid + np.where(interior, shift, 0.0)
            verts.append(origin + side * grid / n)
        return index[key]

    tris = []
    for u, v, w, at_max in _CUBE_FACES:
        for i in range(n):
            for j in range(n):
                ids = []
                for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    ijk = [0, 0, 0]
                    ijk[u] = i + di
                    ijk[v] = j + dj
                    ijk[w] = n if at_max else 0
                    ids.append(vid(ijk))
                p00, p10, p11, p01 = ids
                tris.append((p00, p10, p11))
                tris.append((p00, p11, p01))
    tris = np.asarray(tris, dtype=np.int64)
    return SurfaceMesh(np.asarray(verts), tris, np.full(len(tris), scatterer_id))


def _icosahedron():
    t = (1.0 + 5.0**0.5) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1)[:, None], f


def generate_sphere(radius=1.0, subdivisions=2, center=(0.0, 0.0, 0.0), scatterer_id=0):
    """Icosphere: icosahedron refined ``subdivisions`` times, projected to the sphere."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    verts, faces = _icosahedron()
    verts = list(verts)
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = verts[i] + verts[j]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.asarray(new, dtype=np.int64)
    verts = np.asarray(verts)
    corners = verts[faces]
    nrm = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    flip = np.einsum("ij,ij->i", nrm, corners.mean(axis=1)) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    pts = np.asarray(center, dtype=float) + radius * verts
    return SurfaceMesh(pts, faces, np.full(len(faces), scatterer_id))


def combine(meshes):
    """Merge meshes into one; scatterer ids are renumbered consecutively in input order."""
    verts, tris, ids = [], [], []
    offset = 0
    next_id = 0
    for mesh in meshes:
        verts.append(mesh.vertices)
        tris.append(mesh.triangles + offset)
        unique, local = np.unique(mesh.scatterer_ids, return_inverse=True)
        ids.append(local.reshape(-1) + next_id)
        offset += mesh.n_vertices
        next_id += len(unique)
    return SurfaceMesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(ids))


# --- I/O --------------------------------------------------------------------------------


def save_mesh(mesh, path):
    path = Path(path)
    lines = [f"mesh-v1 {mesh.n_vertices} {mesh.n_triangles} {mesh.n_scatterers}"]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [
        f"t {i} {j} {k} {s}"
        for (i, j, k), s in zip(mesh.triangles.tolist(), mesh.scatterer_ids.tolist())
    ]
    path.write_text("\n".join(lines) + "\n")


def load_mesh(path, validate=True):
    """Read a native ``mesh-v1`` or Gmsh ASCII v2 file."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("$MeshFormat"):
        mesh = _parse_gmsh(text)
    else:
        mesh = _parse_native(text)
    if validate:
        mesh.validate()
    return mesh


def _parse_native(text):
    header = None
    verts, tris, ids = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if header is None:
                if tok[0] != "mesh-v1" or len(tok) != 4:
                    raise MeshParseError("expected header 'mesh-v1 <V> <T> <M>'", lineno)
                header = tuple(int(t) for t in tok[1:])
            elif tok[0] == "v" and len(tok) == 4:
                verts.append([float(t) for t in tok[1:]])
            elif tok[0] == "t" and len(tok) == 5:
                tris.append([int(t) for t in tok[1:4]])
                ids.append(int(tok[4]))
            else:
                raise MeshParseError(f"unrecognised record {line!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, MeshParseError):
                raise
            raise MeshParseError(str(exc), lineno) from None
    if header is None:
        raise MeshParseError("empty mesh file", 1)
    nv, nt, nm = header
    if len(verts) != nv or len(tris) != nt:
        raise MeshParseError(
            f"header announces {nv} vertices/{nt} triangles, found {len(verts)}/{len(tris)}"
        )
    if tris and (max(ids) + 1 != nm):
        raise MeshParseError(f"header announces {nm} scatterers, ids go up to {max(ids)}")
    return SurfaceMesh(np.asarray(verts, dtype=float), np.asarray(tris), np.asarray(ids))


def _parse_gmsh(text):
    lines = text.splitlines()
    pos = 0

    def section(name):
        nonlocal pos
        while pos < len(lines) and lines[pos].strip() != f"${name}":
            pos += 1
        if pos == len(lines):
            raise MeshParseError(f"missing ${name} section")
        pos += 1
        return pos

    start = section("MeshFormat")
    version = lines[start].split()[0]
    if not version.startswith("2"):
        raise MeshParseError(f"only Gmsh ASCII v2 is supported, got {version}", start + 1)
    start = section("Nodes")
    count = int(lines[start])
    node_index = {}
    verts = []
    for offset in range(count):
        lineno = start + 2 + offset
        tok = lines[start + 1 + offset].split()
        if len(tok) != 4:
            raise MeshParseError("malformed node line", lineno)
        node_index[int(tok[0])] = len(verts)
        verts.append([float(t) for t in tok[1:]])
    start = section("Elements")
    count = int(lines[start])
    tris, tags = [], []
    for offset in range(count):
        lineno = start + 2 + offset
        tok = [int(t) for t in lines[start + 1 + offset].split()]
        etype, ntags = tok[1], tok[2]
        if etype in (1, 15):
            continue
        if etype != 2:
            raise MeshParseError(f"unsupported element type {etype}", lineno)
        node_ids = tok[3 + ntags:]
        try:
            tris.append([node_index[n] for n in node_ids])
        except KeyError:
            raise MeshParseError("element references unknown node", lineno) from None
        tags.append(tok[3] if ntags else 0)
    if not tris:
        raise MeshParseError("no triangles in Gmsh file")
    uniq = sorted(set(tags))
    remap = {t: i for i, t in enumerate(uniq)}
    return SurfaceMesh(np.asarray(verts), np.asarray(tris), np.asarray([remap[t] for t in tags]))
