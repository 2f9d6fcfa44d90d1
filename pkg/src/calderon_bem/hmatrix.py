"""Hierarchical matrices: cluster trees, block trees, ACA compression and matvec.

A block of a Galerkin matrix whose row and column clusters have disjoint
bounding boxes (``dist > 0``) is admissible.  Admissible blocks further away
than the near-field cutoff ``chi`` are dropped (treated as zero); the rest
are compressed with adaptive cross approximation.  All remaining blocks that
cannot be subdivided further are stored densely.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ClusterNode",
    "ClusterTree",
    "LeafKind",
    "BlockLeaf",
    "BlockTree",
    "LowRankBlock",
    "HMatrix",
    "HParams",
    "build_cluster_tree",
    "build_block_tree",
    "box_distance",
    "aca",
    "assemble_hmatrix",
    "hmatvec",
    "compression_ratio",
]


@dataclass(frozen=True)
class HParams:
    """Compression parameters: ACA tolerance ``nu`` and near-field cutoff ``chi``."""

    nu: float = 1e-3
    chi: float = math.inf
    leaf_size: int = 32
    max_rank: int | None = None

    def __post_init__(self):
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"ACA tolerance nu must lie in (0, 1), got {self.nu}")
        if not self.chi >= 0.0:
            raise ValueError(f"near-field cutoff chi must be >= 0, got {self.chi}")
        if self.leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")


@dataclass(eq=False)
class ClusterNode:
    start: int
    stop: int
    lo: np.ndarray
    hi: np.ndarray
    level: int
    children: list = field(default_factory=list)

    @property
    def size(self):
        return self.stop - self.start

    @property
    def is_leaf(self):
        return not self.children


@dataclass(eq=False)
class ClusterTree:
    root: ClusterNode
    perm: np.ndarray  # tree position -> original dof index
    leaf_size: int

    def indices(self, node):
        return self.perm[node.start : node.stop]

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self):
        return [n for n in self.nodes() if n.is_leaf]

    @property
    def depth(self):
        return max(n.level for n in self.nodes())


def build_cluster_tree(lo, hi, leaf_size=32):
    """Binary tree over dofs with per-dof support boxes ``lo``/``hi`` (``(N, 3)``).

    Nodes are split along the longest axis of their bounding box at the median
    of the box centres; ties are broken by the original index.
    """
    if leaf_size < 1:
        raise ValueError("leaf_size must be >= 1")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    centres = 0.5 * (lo + hi)
    perm = np.arange(lo.shape[0])

    def build(start, stop, level):
        idx = perm[start:stop]
        node = ClusterNode(start, stop, lo[idx].min(axis=0), hi[idx].max(axis=0), level)
        if stop - start > leaf_size:
            axis = int(np.argmax(node.hi - node.lo))
            order = np.lexsort((idx, centres[idx, axis]))
            perm[start:stop] = idx[order]
            mid = start + (stop - start) // 2
            node.children = [build(start, mid, level + 1), build(mid, stop, level + 1)]
        return node

    root = build(0, lo.shape[0], 0)
    return ClusterTree(root, perm, leaf_size)


def box_distance(lo1, hi1, lo2, hi2):
    """Euclidean distance between two axis-aligned boxes (0 if they overlap)."""
    gap = np.maximum(0.0, np.maximum(lo1 - hi2, lo2 - hi1))
    return float(np.sqrt(gap @ gap))


class LeafKind(enum.Enum):
    INADMISSIBLE = "dense"
    ADMISSIBLE = "lowrank"
    ADMISSIBLE_ZERO = "zero"


@dataclass(eq=False)
class BlockLeaf:
    rows: ClusterNode
    cols: ClusterNode
    kind: LeafKind
    distance: float


@dataclass(eq=False)
class BlockTree:
    row_tree: ClusterTree
    col_tree: ClusterTree
    chi: float
    leaves: list

    def count(self, kind):
        return sum(1 for leaf in self.leaves if leaf.kind is kind)

    def covered_area(self):
        return sum(leaf.rows.size * leaf.cols.size for leaf in self.leaves)


def build_block_tree(row_tree, col_tree, chi=math.inf):
    if not chi >= 0.0:
        raise ValueError(f"chi must be >= 0, got {chi}")
    leaves = []

    def descend(r, c):
        dist = box_distance(r.lo, r.hi, c.lo, c.hi)
        if dist > 0.0:
            kind = LeafKind.ADMISSIBLE_ZERO if dist > chi else LeafKind.ADMISSIBLE
            leaves.append(BlockLeaf(r, c, kind, dist))
        elif r.is_leaf and c.is_leaf:
            leaves.append(BlockLeaf(r, c, LeafKind.INADMISSIBLE, dist))
        elif r.is_leaf:
            for cc in c.children:
                descend(r, cc)
        elif c.is_leaf:
            for rc in r.children:
                descend(rc, c)
        else:
            for rc in r.children:
                for cc in c.children:
                    descend(rc, cc)

    descend(row_tree.root, col_tree.root)
    return BlockTree(row_tree, col_tree, chi, leaves)


@dataclass(eq=False)
class LowRankBlock:
    """``B ~ U @ V`` with ``U`` of shape ``(n, r)`` and ``V`` of shape ``(r, m)``."""

    U: np.ndarray
    V: np.ndarray
    cap_hit: bool = False
    error_estimate: float = 0.0

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def stored_entries(self):
        return self.rank * (self.U.shape[0] + self.V.shape[1])

    def to_dense(self):
        return self.U @ self.V


def aca(get_row, get_col, shape, nu, max_rank=None, zero_row_limit=3):
    """Partially pivoted ACA with a rook search for the pivot.

    ``get_row(i)``/``get_col(j)`` return row ``i``/column ``j`` of the block.
    Stops when ``|u_r| |v_r| <= nu * |B_r|_F`` (running Frobenius estimate).
    A block whose first ``zero_row_limit`` sampled rows vanish is taken as zero.
    ``cap_hit`` is set when ``max_rank`` (default ``min(n, m) // 2``) stops the
    iteration before the tolerance is met; the caller decides on a fallback.
    """
    n, m = shape
    if max_rank is None:
        max_rank = max(1, min(n, m) // 2)
    max_rank = min(max_rank, n, m)
    us, vs = [], []
    norm2 = 0.0
    used_rows = np.zeros(n, dtype=bool)
    row_index = 0
    zero_rows = 0
    converged = False
    estimate = 0.0

    def residual_row(i):
        row = np.asarray(get_row(i), dtype=complex).copy()
        for u, v in zip(us, vs):
            row -= u[i] * v
        return row

    def residual_col(j):
        col = np.asarray(get_col(j), dtype=complex).copy()
        for u, v in zip(us, vs):
            col -= v[j] * u
        return col

    # residuals at rounding level relative to the largest pivot count as zero
    largest_pivot = 0.0
    while len(us) < max_rank:
        used_rows[row_index] = True
        row = residual_row(row_index)
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) <= 100.0 * np.finfo(float).eps * largest_pivot or abs(row[j]) == 0.0:
            zero_rows += 1
            free = np.flatnonzero(~used_rows)
            if zero_rows >= zero_row_limit or free.size == 0:
                converged = True
                estimate = 0.0
                break
            row_index = int(free[0])
            continue
        zero_rows = 0
        # rook search: move to the largest entry of the column, then of that row
        col = residual_col(j)
        for _ in range(3):
            i2 = int(np.argmax(np.abs(col)))
            if i2 == row_index or abs(col[i2]) <= abs(row[j]):
                break
            row_index = i2
            used_rows[row_index] = True
            row = residual_row(row_index)
            j2 = int(np.argmax(np.abs(row)))
            if j2 == j:
                break
            j = j2
            col = residual_col(j)
        pivot = row[j]
        largest_pivot = max(largest_pivot, abs(pivot))
        u = col
        v = row / pivot
        cross = 0.0
        if us:
            uu = np.array(us)
            vv = np.array(vs)
            cross = 2.0 * np.real(np.sum((uu.conj() @ u) * (vv.conj() @ v)))
        unorm = np.linalg.norm(u)
        vnorm = np.linalg.norm(v)
        norm2 = max(norm2 + cross + (unorm * vnorm) ** 2, 0.0)
        us.append(u)
        vs.append(v)
        estimate = unorm * vnorm
        if estimate <= nu * math.sqrt(norm2):
            converged = True
            break
        mags = np.abs(u)
        mags[used_rows] = -1.0
        if mags.max() < 0.0:
            converged = True
            break
        row_index = int(np.argmax(mags))
    r = len(us)
    U = np.array(us).T if r else np.zeros((n, 0), dtype=complex)
    V = np.array(vs) if r else np.zeros((0, m), dtype=complex)
    cap_hit = not converged
    rel = estimate / math.sqrt(norm2) if norm2 > 0 else 0.0
    return LowRankBlock(U.reshape(n, r), V.reshape(r, m), cap_hit, rel)


@dataclass(eq=False)
class HMatrix:
    shape: tuple
    block_tree: BlockTree
    dense_blocks: dict  # leaf index -> ndarray
    lowrank_blocks: dict  # leaf index -> LowRankBlock
    params: HParams
    dense_fallbacks: int = 0

    @property
    def stored_entries(self):
        total = sum(b.size for b in self.dense_blocks.values())
        total += sum(b.stored_entries for b in self.lowrank_blocks.values())
        return total

    def compression_ratio(self):
        return compression_ratio(self)

    def matvec(self, x):
        return hmatvec(self, x)

    def to_dense(self):
        out = np.zeros(self.shape, dtype=complex)
        rt, ct = self.block_tree.row_tree, self.block_tree.col_tree
        for idx, leaf in enumerate(self.block_tree.leaves):
            rows, cols = rt.indices(leaf.rows), ct.indices(leaf.cols)
            if idx in self.dense_blocks:
                out[np.ix_(rows, cols)] = self.dense_blocks[idx]
            elif idx in self.lowrank_blocks:
                out[np.ix_(rows, cols)] = self.lowrank_blocks[idx].to_dense()
        return out

    def statistics(self):
        ranks = [b.rank for b in self.lowrank_blocks.values()]
        return {
            "leaves_dense": self.block_tree.count(LeafKind.INADMISSIBLE),
            "leaves_lowrank": self.block_tree.count(LeafKind.ADMISSIBLE),
            "leaves_zero": self.block_tree.count(LeafKind.ADMISSIBLE_ZERO),
            "dense_fallbacks": self.dense_fallbacks,
            "rank_histogram": {str(r): ranks.count(r) for r in sorted(set(ranks))},
            "stored_entries": int(self.stored_entries),
            "compression_ratio": float(self.compression_ratio()),
        }


def assemble_hmatrix(block_evaluator, row_tree, col_tree, params):
    """Build an H-matrix from ``block_evaluator(rows, cols) -> ndarray``."""
    tree = build_block_tree(row_tree, col_tree, params.chi)
    dense, lowrank = {}, {}
    fallbacks = 0
    for idx, leaf in enumerate(tree.leaves):
        rows = row_tree.indices(leaf.rows)
        cols = col_tree.indices(leaf.cols)
        if leaf.kind is LeafKind.INADMISSIBLE:
            dense[idx] = block_evaluator(rows, cols)
        elif leaf.kind is LeafKind.ADMISSIBLE:
            # beyond this rank the factors would not be smaller than the block
            cheaper = (len(rows) * len(cols) - 1) // (len(rows) + len(cols))
            if params.max_rank is not None:
                cheaper = min(cheaper, params.max_rank)
            block = aca(
                lambda i: block_evaluator(rows[i : i + 1], cols)[0],
                lambda j: block_evaluator(rows, cols[j : j + 1])[:, 0],
                (len(rows), len(cols)),
                params.nu,
                cheaper,
            )
            if block.cap_hit:
                dense[idx] = block_evaluator(rows, cols)
                fallbacks += 1
            else:
                lowrank[idx] = block
    n = row_tree.perm.shape[0]
    m = col_tree.perm.shape[0]
    return HMatrix((n, m), tree, dense, lowrank, params, fallbacks)


def hmatvec(H, x):
    x = np.asarray(x)
    if x.shape[0] != H.shape[1]:
        raise ValueError(f"dimension mismatch: H is {H.shape}, x has length {x.shape[0]}")
    y = np.zeros((H.shape[0],) + x.shape[1:], dtype=np.result_type(x, complex))
    rt, ct = H.block_tree.row_tree, H.block_tree.col_tree
    for idx, leaf in enumerate(H.block_tree.leaves):
        if idx in H.dense_blocks:
            y[rt.indices(leaf.rows)] += H.dense_blocks[idx] @ x[ct.indices(leaf.cols)]
        elif idx in H.lowrank_blocks:
            b = H.lowrank_blocks[idx]
            y[rt.indices(leaf.rows)] += b.U @ (b.V @ x[ct.indices(leaf.cols)])
    return y


def compression_ratio(H):
    return H.stored_entries / float(H.shape[0] * H.shape[1])
