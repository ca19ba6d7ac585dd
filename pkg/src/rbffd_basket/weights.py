"""RBF-FD weights from polyharmonic splines with polynomial augmentation.

For each stencil the five derivative weight vectors (d/ds1, d/ds2,
d2/ds1^2, d2/ds2^2, d2/ds1ds2) come from one saddle-point system

    [ Phi  P ] [w]   [ Lphi at center ]
    [ P^T  0 ] [g] = [ Lp   at center ]

where Phi is the r^(2q-1) kernel matrix over the stencil and P holds the
monomials of total degree <= p. The polynomial block forces the weights
to reproduce every such monomial exactly, which is what controls the
convergence order. Stencil coordinates are shifted to the center and
divided by the stencil radius before assembly for conditioning; weights
are rescaled back by the appropriate radius power afterwards.

The assembled global matrix W carries one combined Black-Scholes row per
PDE node and all-zero rows for Dirichlet nodes, whose values are injected
by the time integrator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .market import ModelParams, coefficient_arrays
from .nodes import NodeSet
from .stencils import StencilSet

logger = logging.getLogger(__name__)

#: saddle systems whose condition estimate exceeds this trigger a warning
CONDITION_WARN_THRESHOLD = 1e14

_DERIVATIVE_NAMES = ("d1", "d2", "d11", "d22", "d12")
_DERIVATIVE_ORDERS = np.array([1, 1, 2, 2, 2])


class WeightComputationError(RuntimeError):
    """Raised when a local saddle system is singular."""

    def __init__(self, node: int, cond: float):
        super().__init__(
            f"singular local weight system at node {node} "
            f"(condition estimate {cond:.3e})")
        self.node = node
        self.cond = cond


@dataclass
class LocalWeights:
    """Five derivative weight vectors of length m for one stencil."""

    d1: np.ndarray
    d2: np.ndarray
    d11: np.ndarray
    d22: np.ndarray
    d12: np.ndarray

    def as_matrix(self) -> np.ndarray:
        """(m, 5) matrix with columns ordered d1, d2, d11, d22, d12."""
        return np.stack([self.d1, self.d2, self.d11, self.d22, self.d12], axis=1)


def monomial_count(p: int) -> int:
    """Number of 2D monomials of total degree <= p."""
    if p < 0:
        raise ValueError("degree must be nonnegative")
    return (p + 2) * (p + 1) // 2


def monomial_exponents(p: int) -> np.ndarray:
    """Exponent pairs (a, b), a+b <= p, in graded lexicographic order."""
    pairs = [(a, total - a) for total in range(p + 1) for a in range(total, -1, -1)]
    return np.array(pairs, dtype=np.intp)


def phs_derivatives(d: tuple[float, float], q: int) -> dict[str, float]:
    """Kernel phi(r) = r^(2q-1) and its derivatives at displacement d.

    Returns {"phi", "d1", "d2", "d11", "d22", "d12"} where the derivative
    keys follow the argument of phi(|s - s_k|) evaluated at s = s_k + d.
    Requires q >= 3 so the second derivatives stay finite at r = 0.
    """
    if q < 3:
        raise ValueError("q must be at least 3 for finite second derivatives")
    beta = 2 * q - 1
    d1, d2 = float(d[0]), float(d[1])
    r2 = d1 * d1 + d2 * d2
    if r2 == 0.0:
        return dict.fromkeys(("phi", "d1", "d2", "d11", "d22", "d12"), 0.0)
    r = np.sqrt(r2)
    rb2 = r ** (beta - 2)
    rb4 = r ** (beta - 4)
    return {
        "phi": r ** beta,
        "d1": beta * rb2 * d1,
        "d2": beta * rb2 * d2,
        "d11": beta * rb2 + beta * (beta - 2) * rb4 * d1 * d1,
        "d22": beta * rb2 + beta * (beta - 2) * rb4 * d2 * d2,
        "d12": beta * (beta - 2) * rb4 * d1 * d2,
    }


def _phs_matrix(pts: np.ndarray, beta: int) -> np.ndarray:
    """Kernel matrix phi(|x_j - x_k|) for stacked stencils (n, m, 2)."""
    diff = pts[:, :, None, :] - pts[:, None, :, :]
    r2 = np.einsum("nijk,nijk->nij", diff, diff)
    return r2 ** ((beta - 1) / 2) * np.sqrt(r2)


def _phs_rhs(pts: np.ndarray, beta: int) -> np.ndarray:
    """Derivatives of phi(|s - x_k|) at s = 0 for stacked stencils.

    pts holds stencil coordinates relative to the center, so the
    displacement center - x_k is -pts. Returns (n, m, 5).
    """
    d = -pts
    r2 = np.einsum("nmk,nmk->nm", d, d)
    r = np.sqrt(r2)
    rb2 = r ** (beta - 2)
    rb4 = r ** (beta - 4)
    out = np.empty(pts.shape[:2] + (5,))
    out[:, :, 0] = beta * rb2 * d[:, :, 0]
    out[:, :, 1] = beta * rb2 * d[:, :, 1]
    out[:, :, 2] = beta * rb2 + beta * (beta - 2) * rb4 * d[:, :, 0] ** 2
    out[:, :, 3] = beta * rb2 + beta * (beta - 2) * rb4 * d[:, :, 1] ** 2
    out[:, :, 4] = beta * (beta - 2) * rb4 * d[:, :, 0] * d[:, :, 1]
    return out


def _monomial_matrix(pts: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """Monomial block x^a y^b for stacked stencils: (n, m, nu)."""
    return (pts[:, :, 0:1] ** exps[None, None, :, 0]
            * pts[:, :, 1:2] ** exps[None, None, :, 1])


def _monomial_rhs(exps: np.ndarray) -> np.ndarray:
    """Derivatives of each monomial at the origin: (nu, 5)."""
    nu = exps.shape[0]
    rhs = np.zeros((nu, 5))
    targets = {(1, 0): (0, 1.0), (0, 1): (1, 1.0), (2, 0): (2, 2.0),
               (0, 2): (3, 2.0), (1, 1): (4, 1.0)}
    for k, (a, b) in enumerate(exps):
        hit = targets.get((int(a), int(b)))
        if hit is not None:
            rhs[k, hit[0]] = hit[1]
    return rhs


def _solve_saddle(mats: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched solve with one step of iterative refinement."""
    sol = np.linalg.solve(mats, rhs)
    resid = rhs - mats @ sol
    sol += np.linalg.solve(mats, resid)
    return sol


def _weights_batch(local_pts: np.ndarray, radii: np.ndarray, p: int, q: int,
                   node_ids: np.ndarray, check_conditioning: bool) -> np.ndarray:
    """Derivative weights for stacked stencils.

    local_pts: (n, m, 2) coordinates relative to each center;
    radii: (n,) stencil radii; returns (n, m, 5) with columns ordered
    as _DERIVATIVE_NAMES. Weights are expressed in unscaled coordinates.
    """
    if q < 3:
        raise ValueError("q must be at least 3 for finite second derivatives")
    n, m, _ = local_pts.shape
    exps = monomial_exponents(p)
    nu = exps.shape[0]
    if m < nu:
        raise ValueError(f"stencil size {m} below polynomial dimension {nu}")
    beta = 2 * q - 1

    scaled = local_pts / radii[:, None, None]
    size = m + nu
    mats = np.zeros((n, size, size))
    mats[:, :m, :m] = _phs_matrix(scaled, beta)
    pblock = _monomial_matrix(scaled, exps)
    mats[:, :m, m:] = pblock
    mats[:, m:, :m] = np.transpose(pblock, (0, 2, 1))

    rhs = np.zeros((n, size, 5))
    rhs[:, :m, :] = _phs_rhs(scaled, beta)
    rhs[:, m:, :] = _monomial_rhs(exps)[None, :, :]

    if check_conditioning:
        sv = np.linalg.svd(mats, compute_uv=False)
        cond = sv[:, 0] / sv[:, -1]
        worst = int(np.argmax(cond))
        if cond[worst] > CONDITION_WARN_THRESHOLD:
            import warnings
            warnings.warn(
                f"ill-conditioned local weight system at node "
                f"{int(node_ids[worst])}: condition estimate {cond[worst]:.3e}",
                stacklevel=2)
        logger.debug("local system condition: max %.3e (node %d)",
                     cond[worst], int(node_ids[worst]))

    try:
        sol = _solve_saddle(mats, rhs)
    except np.linalg.LinAlgError:
        for k in range(n):
            try:
                np.linalg.solve(mats[k], rhs[k])
            except np.linalg.LinAlgError:
                sv = np.linalg.svd(mats[k], compute_uv=False)
                cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
                raise WeightComputationError(int(node_ids[k]), cond) from None
        raise

    w = sol[:, :m, :]
    return w / radii[:, None, None] ** _DERIVATIVE_ORDERS[None, None, :]


def local_weights(points: np.ndarray, center: np.ndarray, p: int, q: int,
                  check_conditioning: bool = True) -> LocalWeights:
    """Derivative weights for a single stencil.

    points: (m, 2) stencil coordinates, center: (2,) evaluation point
    (one of the stencil points). The weights annihilate constants and
    reproduce every monomial of total degree <= p exactly.
    """
    points = np.asarray(points, dtype=float)
    center = np.asarray(center, dtype=float)
    local = points[None, :, :] - center[None, None, :]
    radius = np.array([np.linalg.norm(local[0], axis=1).max()])
    if radius[0] <= 0:
        raise ValueError("stencil points must not all coincide with the center")
    w = _weights_batch(local, radius, p, q, node_ids=np.array([-1]),
                       check_conditioning=check_conditioning)[0]
    return LocalWeights(*(w[:, k] for k in range(5)))


def assemble_w(ns: NodeSet, stencils: StencilSet, model: ModelParams,
               p: int = 4, q: int = 5, chunk: int = 256,
               check_conditioning: bool = True) -> sp.csr_matrix:
    """Assemble the global N x N spatial operator matrix.

    PDE rows combine the five derivative weight vectors with the
    Black-Scholes coefficients at the row's node and add the zeroth-order
    coefficient on the diagonal. Dirichlet rows (corner, far field) are
    left entirely zero; the time integrator injects their values.
    """
    n = ns.n
    centers = stencils.centers
    m = stencils.m
    c11, c22, c12, c1, c2, c0 = coefficient_arrays(
        ns.coords[centers, 0], ns.coords[centers, 1], model)
    coeffs = np.stack([c1, c2, c11, c22, c12], axis=1)

    rows = np.repeat(centers, m)
    cols = stencils.neighbors.ravel()
    vals = np.empty(centers.size * m)

    for lo in range(0, centers.size, chunk):
        hi = min(lo + chunk, centers.size)
        sl = slice(lo, hi)
        pts = ns.coords[stencils.neighbors[sl]]
        local = pts - ns.coords[centers[sl]][:, None, :]
        w = _weights_batch(local, stencils.radius[sl], p, q,
                           node_ids=centers[sl],
                           check_conditioning=check_conditioning)
        combined = np.einsum("nmk,nk->nm", w, coeffs[sl])
        is_center = stencils.neighbors[sl] == centers[sl, None]
        combined += np.where(is_center, c0[sl, None], 0.0)
        vals[lo * m:hi * m] = combined.ravel()

    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sort_indices()
    return mat


def dump_triplets(w: sp.spmatrix, path) -> None:
    """Write the matrix as one 'row col value' line per stored entry."""
    coo = w.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v!r}\n")
