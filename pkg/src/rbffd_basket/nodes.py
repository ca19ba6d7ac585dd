"""Triangular scattered-node layouts for the basket option domain.

The computational domain is the lower triangle {s1, s2 >= 0, s1+s2 <= s_max}.
Both layouts place nodes on diagonals s1+s2 = const: diagonal d (d = 1..N_s)
carries exactly d equispaced nodes, so N = N_s(N_s+1)/2 in total. The uniform
layout uses equidistant diagonals; the nonuniform one spaces them by a sinh
map that clusters nodes around the strike, where the payoff kink sits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class Role(enum.IntEnum):
    """Boundary role of a node."""

    INTERIOR = 0
    AXIS = 1          # s1=0 or s2=0, PDE is solved here (one-sided stencils)
    CORNER = 2        # (0,0), close-field Dirichlet
    FAR_FIELD = 3     # s1+s2=s_max, far-field Dirichlet


@dataclass
class NodeSet:
    """Scattered nodes with boundary roles.

    coords: (N, 2) array of (s1, s2); roles: (N,) Role values;
    diag: (N,) 1-based index of the diagonal each node lies on;
    n_s: number of nodes along one axis; s_max: far-field level.
    """

    coords: np.ndarray
    roles: np.ndarray
    diag: np.ndarray
    n_s: int
    s_max: float

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def pde_mask(self) -> np.ndarray:
        """Nodes where the PDE is discretized (interior and axis)."""
        return (self.roles == Role.INTERIOR) | (self.roles == Role.AXIS)

    @property
    def dirichlet_mask(self) -> np.ndarray:
        return ~self.pde_mask

    def role_counts(self) -> dict[Role, int]:
        return {role: int(np.count_nonzero(self.roles == role)) for role in Role}

    def to_table(self) -> str:
        """One node per line: s1 s2 role diag_index."""
        lines = []
        for (s1, s2), role, d in zip(self.coords, self.roles, self.diag):
            lines.append(f"{s1!r} {s2!r} {Role(role).name.lower()} {d}")
        return "\n".join(lines) + "\n"

    def save_table(self, path: str | Path) -> None:
        Path(path).write_text(self.to_table())


def classify_boundary(coords: np.ndarray, s_max: float, tol: float = 1e-9) -> np.ndarray:
    """Assign a Role to every coordinate pair.

    Far field takes precedence over axis at (s_max, 0) and (0, s_max).
    tol is relative to s_max. Raises on nodes outside the triangle.
    """
    coords = np.asarray(coords, dtype=float)
    s1, s2 = coords[:, 0], coords[:, 1]
    atol = tol * s_max
    bad = (s1 < -atol) | (s2 < -atol) | (s1 + s2 > s_max + atol)
    if np.any(bad):
        raise ValueError(
            f"nodes outside the triangular domain: indices {np.nonzero(bad)[0].tolist()}")
    roles = np.full(coords.shape[0], Role.INTERIOR, dtype=np.int8)
    on_far = np.abs(s1 + s2 - s_max) <= atol
    on_axis = (s1 == 0.0) ^ (s2 == 0.0)
    corner = (s1 == 0.0) & (s2 == 0.0)
    roles[on_axis] = Role.AXIS
    roles[on_far] = Role.FAR_FIELD
    roles[corner] = Role.CORNER
    return roles


def _assemble_from_diagonals(levels: np.ndarray, n_s: int, s_max: float) -> NodeSet:
    """Build a NodeSet from diagonal levels s1+s2 = levels[d-1], d = 1..n_s.

    Diagonal d carries d nodes equispaced between (level, 0) and (0, level);
    s1 is computed as level - s2 so s1+s2 equals the level exactly.
    """
    coords = np.empty((n_s * (n_s + 1) // 2, 2))
    diag = np.empty(coords.shape[0], dtype=np.int32)
    pos = 0
    for d in range(1, n_s + 1):
        level = levels[d - 1]
        if d == 1:
            s2 = np.array([0.0])
        else:
            s2 = level * (np.arange(d) / (d - 1))
        coords[pos:pos + d, 0] = level - s2
        coords[pos:pos + d, 1] = s2
        diag[pos:pos + d] = d
        pos += d
    roles = classify_boundary(coords, s_max)
    return NodeSet(coords=coords, roles=roles, diag=diag, n_s=n_s, s_max=s_max)


def uniform_triangle(n_s: int, s_max: float) -> NodeSet:
    """Uniform layout: nodes (i*h, j*h) with i+j <= n_s-1, h = s_max/(n_s-1).

    Nodes are ordered by diagonal d = i+j+1 and by s2 within a diagonal,
    matching the nonuniform layout's ordering.
    """
    if n_s < 2:
        raise ValueError("need at least two nodes per axis")
    h = s_max / (n_s - 1)
    coords = np.empty((n_s * (n_s + 1) // 2, 2))
    diag = np.empty(coords.shape[0], dtype=np.int32)
    pos = 0
    for d in range(1, n_s + 1):
        j = np.arange(d)
        coords[pos:pos + d, 0] = (d - 1 - j) * h
        coords[pos:pos + d, 1] = j * h
        diag[pos:pos + d] = d
        pos += d
    roles = classify_boundary(coords, s_max)
    return NodeSet(coords=coords, roles=roles, diag=diag, n_s=n_s, s_max=s_max)


def sinh_axis(n1: int, K: float, c: float, s_max: float) -> np.ndarray:
    """Axis coordinates clustered around the strike by a sinh map.

    Equidistant points x_i between arcsinh(-K/c) and arcsinh((s_max-K)/c)
    map to s_i = K + c*sinh(x_i). The step uses 1/(n1-1) so the last node
    lands exactly on s_max; the first always lands on 0. Smaller c gives
    tighter clustering around K.
    """
    if n1 < 2:
        raise ValueError("need at least two nodes per axis")
    if c <= 0:
        raise ValueError("clustering constant must be positive")
    if not 0 < K < s_max:
        raise ValueError("strike must lie inside (0, s_max)")
    lo = np.arcsinh(-K / c)
    hi = np.arcsinh((s_max - K) / c)
    x = lo + (hi - lo) * (np.arange(n1) / (n1 - 1))
    s = K + c * np.sinh(x)
    s[0] = 0.0
    s[-1] = s_max
    return s


def nonuniform_triangle(n_s: int, K: float, c: float, s_max: float) -> NodeSet:
    """Strike-clustered layout: sinh-spaced diagonals, equispaced along each."""
    levels = sinh_axis(n_s, K, c, s_max)
    return _assemble_from_diagonals(levels, n_s, s_max)
