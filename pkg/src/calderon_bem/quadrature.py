"""Quadrature rules for Galerkin double integrals over triangle pairs.

Regular pairs use products of symmetric triangle rules whose order depends on
how far apart the triangles are.  Pairs that share a vertex, an edge or are
identical use Duffy-type regularising decompositions of the 4D reference
domain with tensor Gauss-Legendre points in each of the four variables.

Points of every rule are returned as barycentric coordinates so callers can
evaluate piecewise-linear shape functions directly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "QuadOrders",
    "PairClass",
    "TriangleRule",
    "SingularRule",
    "triangle_rule",
    "classify_pair",
    "sauter_schwab_rule",
    "pair_evaluation_count",
    "SINGULAR_GAUSS_POINTS",
]


@dataclass(frozen=True)
class QuadOrders:
    """Quadrature orders for near, medium and far regular pairs and touching pairs."""

    near: int = 4
    medium: int = 3
    far: int = 2
    singular: int = 6

    def __post_init__(self):
        for name in ("near", "medium", "far", "singular"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 1 <= value <= 6:
                raise ValueError(f"quadrature order {name}={value!r} must be an integer in 1..6")

    @classmethod
    def from_sequence(cls, seq):
        near, medium, far, singular = (int(v) for v in seq)
        return cls(near, medium, far, singular)

    def as_tuple(self):
        return (self.near, self.medium, self.far, self.singular)

    def scaled(self, delta):
        """Orders shifted by ``delta`` and clipped to 1..6."""
        return QuadOrders(*(min(6, max(1, v + delta)) for v in self.as_tuple()))


class PairClass(enum.IntEnum):
    IDENTICAL = 0
    SHARED_EDGE = 1
    SHARED_VERTEX = 2
    NEAR = 3
    MEDIUM = 4
    FAR = 5

    @property
    def touching(self):
        return self <= PairClass.SHARED_VERTEX


# ---------------------------------------------------------------------------
# symmetric triangle rules on (0,0), (1,0), (0,1); weights sum to 1/2

def _orbit3(a, w):
    b = (1.0 - a) / 2.0
    return [(a, b, b), (b, a, b), (b, b, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _rule_data(order):
    third = 1.0 / 3.0
    if order == 1:
        return [(third, third, third)], [1.0]
    if order == 2:
        return _orbit3(2.0 / 3.0, 1.0 / 3.0)
    if order == 3:
        pts, wts = _orbit3(0.6, 25.0 / 48.0)
        return [(third, third, third)] + pts, [-27.0 / 48.0] + wts
    if order == 4:
        p1, w1 = _orbit3(0.108103018168070, 0.223381589678011)
        p2, w2 = _orbit3(0.816847572980459, 0.109951743655322)
        return p1 + p2, w1 + w2
    if order == 5:
        p1, w1 = _orbit3(0.059715871789770, 0.132394152788506)
        p2, w2 = _orbit3(0.797426985353087, 0.125939180544827)
        return [(third, third, third)] + p1 + p2, [0.225] + w1 + w2
    if order == 6:
        p1, w1 = _orbit3(0.501426509658179, 0.116786275726379)
        p2, w2 = _orbit3(0.873821971016996, 0.050844906370207)
        p3, w3 = _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374)
        return p1 + p2 + p3, w1 + w2 + w3
    raise ValueError(f"triangle rule order must be in 1..6, got {order}")


@dataclass(frozen=True)
class TriangleRule:
    order: int
    barycentric: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n,), sum 1/2

    @property
    def points(self):
        """Reference coordinates ``(s, t)`` of the points: ``x = P0 + s(P1-P0) + t(P2-P0)``."""
        return self.barycentric[:, 1:]

    @property
    def size(self):
        return self.weights.shape[0]


@lru_cache(maxsize=None)
def triangle_rule(order):
    """Symmetric rule of polynomial degree ``order`` (1..6) on the reference triangle."""
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)):
        raise ValueError(f"triangle rule order must be an integer, got {order!r}")
    pts, wts = _rule_data(int(order))
    bary = np.asarray(pts, dtype=float)
    bary /= bary.sum(axis=1, keepdims=True)
    weights = 0.5 * np.asarray(wts, dtype=float)
    weights *= 0.5 / weights.sum()
    bary.setflags(write=False)
    weights.setflags(write=False)
    return TriangleRule(int(order), bary, weights)


# ---------------------------------------------------------------------------
# classification

def classify_pair(tri1, tri2, verts1, verts2=None, same_mesh=True, coord_tol=0.0):
    """Classify a triangle pair.

    ``tri1``/``tri2`` are vertex index triples, ``verts1``/``verts2`` the
    vertex arrays they index (``verts2`` defaults to ``verts1``).  Shared
    vertices are found by index when both triangles come from the same mesh,
    otherwise by coordinate coincidence within ``coord_tol``.
    """
    verts2 = verts1 if verts2 is None else verts2
    p = np.asarray(verts1, dtype=float)[list(tri1)]
    q = np.asarray(verts2, dtype=float)[list(tri2)]
    if same_mesh:
        shared = len(set(int(i) for i in tri1) & set(int(j) for j in tri2))
    else:
        dist = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2)
        shared = int(np.sum(np.any(dist <= coord_tol, axis=1)))
    if shared == 3:
        return PairClass.IDENTICAL
    if shared == 2:
        return PairClass.SHARED_EDGE
    if shared == 1:
        return PairClass.SHARED_VERTEX
    return classify_separated(p, q)


def classify_separated(p, q):
    diam = lambda t: max(np.linalg.norm(t[i] - t[j]) for i, j in ((0, 1), (1, 2), (2, 0)))
    d = max(diam(p), diam(q))
    delta = np.min(np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2))
    if delta < d:
        return PairClass.NEAR
    if delta < 3.0 * d:
        return PairClass.MEDIUM
    return PairClass.FAR


# ---------------------------------------------------------------------------
# singular rules
#
# Reference triangle T = {(x1, x2): 0 <= x2 <= x1 <= 1} mapped to a physical
# triangle by x = P0 + x1 (P1 - P0) + x2 (P2 - P1), i.e. barycentric
# coordinates (1 - x1, x1 - x2, x2).  Shared vertices sit at P0 (and P1 for a
# shared edge) in both triangles.

# Gauss points per dimension for each singular order
SINGULAR_GAUSS_POINTS = {1: 1, 2: 2, 3: 2, 4: 3, 5: 3, 6: 4}
_SUBDOMAINS = {PairClass.IDENTICAL: 6, PairClass.SHARED_EDGE: 5, PairClass.SHARED_VERTEX: 2}


def _identical_maps(xi, e1, e2, e3):
    w = xi**3 * e1**2 * e2
    a = (xi, xi * (1 - e1 + e1 * e2))
    b = (xi * (1 - e1 * e2 * e3), xi * (1 - e1))
    c = (xi, xi * e1 * (1 - e2 + e2 * e3))
    d = (xi * (1 - e1 * e2), xi * e1 * (1 - e2))
    e = (xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3))
    f = (xi, xi * e1 * (1 - e2))
    return [(a, b, w), (b, a, w), (c, d, w), (d, c, w), (e, f, w), (f, e, w)]


def _edge_maps(xi, e1, e2, e3):
    w1 = xi**3 * e1**2
    w = xi**3 * e1**2 * e2
    return [
        ((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), w1),
        ((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), w),
        ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e2 * e3), w),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1), w),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2), w),
    ]


def _vertex_maps(xi, e1, e2, e3):
    w = xi**3 * e2
    a = (xi, xi * e1)
    b = (xi * e2, xi * e2 * e3)
    return [(a, b, w), (b, a, w)]


@dataclass(frozen=True)
class SingularRule:
    """4D rule for a touching pair: ``sum_k w_k f(x_k, y_k)`` approximates the
    integral over reference triangles of area 1/2 each (weights sum to 1/4)."""

    pair_class: PairClass
    order: int
    test_barycentric: np.ndarray  # (n, 3)
    trial_barycentric: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n,)

    @property
    def size(self):
        return self.weights.shape[0]

    @property
    def subdomains(self):
        return _SUBDOMAINS[self.pair_class]


@lru_cache(maxsize=None)
def sauter_schwab_rule(pair_class, order):
    """Regularised rule for touching pairs (``m**4`` Gauss points per subdomain)."""
    pair_class = PairClass(pair_class)
    if not pair_class.touching:
        raise ValueError(f"singular rules exist only for touching pairs, got {pair_class.name}")
    if order not in SINGULAR_GAUSS_POINTS:
        raise ValueError(f"singular order must be in 1..6, got {order}")
    m = SINGULAR_GAUSS_POINTS[order]
    g, gw = np.polynomial.legendre.leggauss(m)
    g = 0.5 * (g + 1.0)
    gw = 0.5 * gw
    grids = np.meshgrid(g, g, g, g, indexing="ij")
    wgrid = np.meshgrid(gw, gw, gw, gw, indexing="ij")
    xi, e1, e2, e3 = (a.ravel() for a in grids)
    base_w = np.prod([a.ravel() for a in wgrid], axis=0)
    maps = {
        PairClass.IDENTICAL: _identical_maps,
        PairClass.SHARED_EDGE: _edge_maps,
        PairClass.SHARED_VERTEX: _vertex_maps,
    }[pair_class](xi, e1, e2, e3)
    xs, ys, ws = [], [], []
    for (x1, x2), (y1, y2), jac in maps:
        xs.append(np.stack([1 - x1, x1 - x2, x2], axis=1))
        ys.append(np.stack([1 - y1, y1 - y2, y2], axis=1))
        ws.append(base_w * jac)
    tb, sb, w = np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)
    for a in (tb, sb, w):
        a.setflags(write=False)
    return SingularRule(pair_class, int(order), tb, sb, w)


def pair_evaluation_count(pair_class, orders):
    """Kernel evaluations spent on one triangle pair of the given class."""
    pair_class = PairClass(pair_class)
    if pair_class.touching:
        return _SUBDOMAINS[pair_class] * SINGULAR_GAUSS_POINTS[orders.singular] ** 4
    order = {PairClass.NEAR: orders.near, PairClass.MEDIUM: orders.medium, PairClass.FAR: orders.far}[
        pair_class
    ]
    return triangle_rule(order).size ** 2
