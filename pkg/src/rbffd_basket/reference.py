"""Second-order finite-difference reference solver on the full square.

The scattered-node solver is validated against a dense Cartesian solve
of the same PDE on [0, s_max]^2. Central differences discretize all
derivatives (4-point cross stencil for the mixed term). On the s1=0 and
s2=0 edges every coefficient containing the vanishing coordinate drops
out, leaving a 1D operator along the edge, discretized centrally as
well. The outer edges carry the far-field value, the origin is pinned
to zero, and the time integration reuses the constant-matrix BDF2
schedule with a direct sparse factorization.

Solutions are cached on disk keyed by a hash of (params, n, steps) so a
convergence sweep pays for its reference only once.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .market import ModelParams, coefficient_arrays, payoff
from .timestepping import DirichletValues, build_time_grid, integrate
from .market import far_field_value

logger = logging.getLogger(__name__)


@dataclass
class CartesianGrid:
    """n x n uniform grid over [0, s_max]^2 with values[i, j] at (i*h, j*h)."""

    s_max: float
    n: int
    values: np.ndarray

    @property
    def h(self) -> float:
        return self.s_max / (self.n - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.h


def _fd_operator(model: ModelParams, n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """Spatial operator matrix and the flat indices of Dirichlet rows."""
    h = model.s_max / (n - 1)
    x = np.arange(n) * h
    s1 = np.repeat(x, n)
    s2 = np.tile(x, n)
    c11, c22, c12, c1, c2, c0 = coefficient_arrays(s1, s2, model)
    idx = np.arange(n * n).reshape(n, n)

    rows, cols, vals = [], [], []

    def add(cells: np.ndarray, di: int, dj: int, coef: np.ndarray) -> None:
        rows.append(cells)
        cols.append(cells + di * n + dj)
        vals.append(coef[cells])

    interior = idx[1:-1, 1:-1].ravel()
    add(interior, 1, 0, c11 / h ** 2 + c1 / (2 * h))
    add(interior, -1, 0, c11 / h ** 2 - c1 / (2 * h))
    add(interior, 0, 1, c22 / h ** 2 + c2 / (2 * h))
    add(interior, 0, -1, c22 / h ** 2 - c2 / (2 * h))
    add(interior, 0, 0, -2.0 * (c11 + c22) / h ** 2 + c0)
    add(interior, 1, 1, c12 / (4 * h ** 2))
    add(interior, -1, -1, c12 / (4 * h ** 2))
    add(interior, 1, -1, -c12 / (4 * h ** 2))
    add(interior, -1, 1, -c12 / (4 * h ** 2))

    # s1 = 0 edge: operator degenerates to 1D in s2
    edge = idx[0, 1:-1].ravel()
    add(edge, 0, 1, c22 / h ** 2 + c2 / (2 * h))
    add(edge, 0, -1, c22 / h ** 2 - c2 / (2 * h))
    add(edge, 0, 0, -2.0 * c22 / h ** 2 + c0)

    # s2 = 0 edge: 1D in s1
    edge = idx[1:-1, 0].ravel()
    add(edge, 1, 0, c11 / h ** 2 + c1 / (2 * h))
    add(edge, -1, 0, c11 / h ** 2 - c1 / (2 * h))
    add(edge, 0, 0, -2.0 * c11 / h ** 2 + c0)

    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n * n, n * n)).tocsr()
    mat.sort_indices()

    dirichlet = np.unique(np.concatenate(
        [idx[-1, :], idx[:, -1], idx[0, 0:1]]))
    return mat, dirichlet


def fd_solve(model: ModelParams, n: int, m_steps: int) -> CartesianGrid:
    """Reference price at tau = T on an n x n grid, m_steps BDF2 steps."""
    if n < 3:
        raise ValueError("need at least three grid points per axis")
    op, dir_idx = _fd_operator(model, n)
    h = model.s_max / (n - 1)
    x = np.arange(n) * h
    s1 = np.repeat(x, n)
    s2 = np.tile(x, n)
    u0 = payoff(s1, s2, model.K)

    origin = 0
    d_s1 = s1[dir_idx]
    d_s2 = s2[dir_idx]

    def value_fn(tau: float) -> np.ndarray:
        vals = np.asarray(far_field_value(d_s1, d_s2, tau, model))
        vals[dir_idx == origin] = 0.0
        return vals

    grid = build_time_grid(m_steps, model.T)
    logger.info("fd reference: n=%d (N=%d), %d steps", n, n * n, m_steps)
    u, _ = integrate(op, u0, grid,
                     dirichlet=DirichletValues(dir_idx, value_fn),
                     solver="direct")
    return CartesianGrid(s_max=model.s_max, n=n, values=u.reshape(n, n))


def _lagrange_cubic_weights(xi: np.ndarray) -> np.ndarray:
    """Cubic Lagrange basis on nodes {0,1,2,3} evaluated at xi: (k, 4)."""
    w = np.empty(xi.shape + (4,))
    w[..., 0] = -(xi - 1) * (xi - 2) * (xi - 3) / 6.0
    w[..., 1] = xi * (xi - 2) * (xi - 3) / 2.0
    w[..., 2] = -xi * (xi - 1) * (xi - 3) / 2.0
    w[..., 3] = xi * (xi - 1) * (xi - 2) / 6.0
    return w


def interpolate(grid: CartesianGrid, points: np.ndarray) -> np.ndarray:
    """Piecewise bicubic interpolation on local 4x4 stencils.

    Exact for bicubic polynomials, hence O(h^4) accurate: the
    interpolation never dominates the reference's O(h^2) error.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    eps = 1e-12 * grid.s_max
    if np.any(pts < -eps) or np.any(pts > grid.s_max + eps):
        raise ValueError("interpolation point outside the grid")
    pts = np.clip(pts, 0.0, grid.s_max)
    h = grid.h
    n = grid.n

    t = pts / h
    cell = np.clip(t.astype(np.intp), 0, n - 2)
    i0 = np.clip(cell - 1, 0, n - 4)
    xi = t - i0
    wx = _lagrange_cubic_weights(xi[:, 0])
    wy = _lagrange_cubic_weights(xi[:, 1])
    patch = grid.values[i0[:, 0, None, None] + np.arange(4)[None, :, None],
                        i0[:, 1, None, None] + np.arange(4)[None, None, :]]
    return np.einsum("ka,kab,kb->k", wx, patch, wy)


def _cache_key(model: ModelParams, n: int, m_steps: int) -> str:
    blob = repr((model.r, model.sigma1, model.sigma2, model.rho, model.K,
                 model.T, model.s_max, n, m_steps)).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def reference_cache(model: ModelParams, n: int, m_steps: int,
                    cache_dir: str | Path) -> CartesianGrid:
    """Load the reference grid from disk or compute and store it.

    The file is keyed by a hash of every input; any parameter change is
    a cache miss. A corrupt or mismatched file triggers a recompute.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"ref_{_cache_key(model, n, m_steps)}.npz"
    params = np.array([model.r, model.sigma1, model.sigma2, model.rho,
                       model.K, model.T, model.s_max], dtype=float)
    if path.exists():
        try:
            with np.load(path) as data:
                if (np.array_equal(data["params"], params)
                        and int(data["n"]) == n
                        and int(data["m_steps"]) == m_steps):
                    return CartesianGrid(s_max=model.s_max, n=n,
                                         values=data["values"])
                logger.warning("reference cache key collision at %s", path)
        except Exception:
            logger.warning("unreadable reference cache %s, recomputing", path)
    grid = fd_solve(model, n, m_steps)
    np.savez(path, values=grid.values, params=params, n=n, m_steps=m_steps)
    return grid
