"""Nearest-neighbor stencils over scattered nodes via a k-d tree.

Each node owning a PDE row gets a stencil of its m nearest neighbors
(itself included). Dirichlet nodes own no stencil but may appear as
members of other nodes' stencils. Distance ties are broken by lower
node index so stencils, and therefore the assembled operator, are
fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .nodes import NodeSet

#: relative slack added to the m-th neighbor distance when collecting
#: tie candidates, to absorb last-ulp discrepancies between the tree's
#: internal metric and the distances recomputed here
_TIE_SLACK = 1e-12


@dataclass(frozen=True)
class Stencil:
    """One node's stencil: center index, member indices, radius."""

    center: int
    neighbors: np.ndarray
    radius: float


@dataclass
class StencilSet:
    """Stencils for all PDE nodes, stored as flat arrays.

    centers: (n_pde,) node indices owning a row; neighbors: (n_pde, m)
    member indices sorted by (distance, index); radius: (n_pde,) distance
    to the farthest member.
    """

    centers: np.ndarray
    neighbors: np.ndarray
    radius: np.ndarray

    @property
    def m(self) -> int:
        return self.neighbors.shape[1]

    def for_node(self, node: int) -> Stencil:
        row = int(np.nonzero(self.centers == node)[0][0])
        return Stencil(center=int(self.centers[row]),
                       neighbors=self.neighbors[row],
                       radius=float(self.radius[row]))


def build_kdtree(points: np.ndarray) -> cKDTree:
    """Spatial index with exact Euclidean k-nearest-neighbor queries."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("need a nonempty (n, 2) coordinate array")
    if not np.all(np.isfinite(points)):
        raise ValueError("coordinates must be finite")
    return cKDTree(points)


def nearest_neighbors(tree: cKDTree, center: np.ndarray, m: int) -> np.ndarray:
    """Indices of the m points closest to center, ties broken by lower index.

    The result is sorted by (distance, index), so when the query point is
    itself a node, that node comes first.
    """
    n = tree.n
    if m > n:
        raise ValueError(f"requested {m} neighbors from {n} points")
    center = np.asarray(center, dtype=float)
    dist, _ = tree.query(center, k=m)
    d_m = float(np.atleast_1d(dist)[-1])
    candidates = np.asarray(tree.query_ball_point(center, d_m * (1.0 + _TIE_SLACK)),
                            dtype=np.intp)
    cd = np.linalg.norm(tree.data[candidates] - center, axis=1)
    order = np.lexsort((candidates, cd))
    return candidates[order[:m]]


def build_stencils(ns: NodeSet, m: int) -> StencilSet:
    """Build stencils for every interior and axis node of a NodeSet.

    The neighbor search runs over the full node set, so Dirichlet nodes
    can appear as stencil members.
    """
    if m > ns.n:
        raise ValueError(f"stencil size {m} exceeds node count {ns.n}")
    tree = build_kdtree(ns.coords)
    centers = np.nonzero(ns.pde_mask)[0].astype(np.intp)
    neighbors = np.empty((centers.size, m), dtype=np.intp)
    for row, node in enumerate(centers):
        neighbors[row] = nearest_neighbors(tree, ns.coords[node], m)
    diffs = ns.coords[neighbors] - ns.coords[centers][:, None, :]
    radius = np.linalg.norm(diffs, axis=2).max(axis=1)
    return StencilSet(centers=centers, neighbors=neighbors, radius=radius)
