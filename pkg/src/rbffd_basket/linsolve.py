"""Sparse kernels: CSR matvec, zero-fill ILU, restarted GMRES.

The time-step matrix is identical in every step, so one ILU(0)
factorization serves the whole integration and each solve warm-starts
from the previous step's solution. GMRES applies the preconditioner
from the right, so the convergence test acts on the true residual
|b - Ax| / |b|.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit

#: a SparseOperator is a scipy CSR matrix throughout the package
SparseOperator = sp.csr_matrix


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-8
    restart: int = 30
    maxit: int = 500


@dataclass
class SolveStats:
    iterations: int
    residual: float
    converged: bool
    history: list[float] = field(default_factory=list)


class ZeroPivotError(RuntimeError):
    def __init__(self, row: int):
        super().__init__(f"zero pivot in ILU(0) at row {row}")
        self.row = row


def spmv(a: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product with a dimension check."""
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {x.shape}")
    return a @ x


@njit(cache=True)
def _ilu0_factor(n, indptr, indices, data, diag_pos):
    """In-place IKJ ILU(0) on sorted CSR arrays. Returns -1 or the bad row."""
    for i in range(n):
        for pp in range(indptr[i], indptr[i + 1]):
            k = indices[pp]
            if k >= i:
                break
            piv = data[diag_pos[k]]
            if piv == 0.0:
                return k
            lik = data[pp] / piv
            data[pp] = lik
            qq = diag_pos[k] + 1
            p2 = pp + 1
            while qq < indptr[k + 1] and p2 < indptr[i + 1]:
                jk = indices[qq]
                ji = indices[p2]
                if jk == ji:
                    data[p2] -= lik * data[qq]
                    qq += 1
                    p2 += 1
                elif jk < ji:
                    qq += 1
                else:
                    p2 += 1
    for i in range(n):
        if data[diag_pos[i]] == 0.0:
            return i
    return -1


@njit(cache=True)
def _lower_solve(n, indptr, indices, data, b, out):
    """Solve L out = b with unit-diagonal L stored below the diagonal."""
    for i in range(n):
        acc = b[i]
        for pp in range(indptr[i], indptr[i + 1]):
            j = indices[pp]
            if j >= i:
                break
            acc -= data[pp] * out[j]
        out[i] = acc


@njit(cache=True)
def _upper_solve(n, indptr, indices, data, diag_pos, b, out):
    """Solve U out = b with U stored on and above the diagonal."""
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for pp in range(indptr[i + 1] - 1, diag_pos[i], -1):
            acc -= data[pp] * out[indices[pp]]
        out[i] = acc / data[diag_pos[i]]


@dataclass
class IluFactors:
    """Compact ILU(0) factors sharing the sparsity pattern of A.

    The strictly-lower entries of `data` hold L (unit diagonal implied),
    the rest hold U.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    diag_pos: np.ndarray

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Apply (LU)^-1 b."""
        y = np.empty_like(b)
        _lower_solve(self.n, self.indptr, self.indices, self.data, b, y)
        z = np.empty_like(b)
        _upper_solve(self.n, self.indptr, self.indices, self.data,
                     self.diag_pos, y, z)
        return z

    @property
    def lower(self) -> sp.csr_matrix:
        """L as an explicit unit-lower-triangular CSR matrix."""
        out = sp.csr_matrix((self.data.copy(), self.indices.copy(),
                             self.indptr.copy()), shape=(self.n, self.n))
        out = sp.tril(out, k=-1).tocsr()
        return (out + sp.eye(self.n, format="csr")).tocsr()

    @property
    def upper(self) -> sp.csr_matrix:
        out = sp.csr_matrix((self.data.copy(), self.indices.copy(),
                             self.indptr.copy()), shape=(self.n, self.n))
        return sp.triu(out, k=0).tocsr()


def ilu0(a: sp.spmatrix) -> IluFactors:
    """Zero-fill incomplete LU factorization of a square sparse matrix.

    For matrices whose exact LU produces no fill (e.g. tridiagonal),
    the factors are the exact ones.
    """
    a = a.tocsr().copy()
    a.sort_indices()
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    indptr = a.indptr.astype(np.int64)
    indices = a.indices.astype(np.int64)
    data = a.data.astype(np.float64).copy()
    diag_pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        row = indices[indptr[i]:indptr[i + 1]]
        pos = np.searchsorted(row, i)
        if pos == row.size or row[pos] != i:
            raise ZeroPivotError(i)
        diag_pos[i] = indptr[i] + pos
    bad = _ilu0_factor(n, indptr, indices, data, diag_pos)
    if bad >= 0:
        raise ZeroPivotError(int(bad))
    return IluFactors(n=n, indptr=indptr, indices=indices, data=data,
                      diag_pos=diag_pos)


def gmres(a: sp.spmatrix, b: np.ndarray, x0: np.ndarray | None = None,
          precond: IluFactors | None = None, tol: float = 1e-8,
          restart: int = 30, maxit: int = 500) -> tuple[np.ndarray, SolveStats]:
    """Right-preconditioned restarted GMRES.

    Returns once |b - Ax| / |b| <= tol or maxit inner iterations are
    spent. A warm start that already satisfies the tolerance returns
    immediately with zero iterations.
    """
    n = b.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"dimension mismatch: {a.shape} vs rhs {n}")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveStats(0, 0.0, True, [0.0])

    def apply_m(v):
        return precond.solve(v) if precond is not None else v

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - a @ x
    beta = float(np.linalg.norm(r))
    rel = beta / bnorm
    history = [rel]
    if rel <= tol:
        return x, SolveStats(0, rel, True, history)

    total = 0
    converged = False
    while True:
        v = np.empty((restart + 1, n))
        h = np.zeros((restart + 1, restart))
        cs = np.zeros(restart)
        sn = np.zeros(restart)
        g = np.zeros(restart + 1)
        g[0] = beta
        v[0] = r / beta
        j = -1
        breakdown = False
        for j in range(restart):
            w = a @ apply_m(v[j])
            for i in range(j + 1):
                h[i, j] = v[i] @ w
                w -= h[i, j] * v[i]
            hj1 = float(np.linalg.norm(w))
            for i in range(j):
                t = cs[i] * h[i, j] + sn[i] * h[i + 1, j]
                h[i + 1, j] = -sn[i] * h[i, j] + cs[i] * h[i + 1, j]
                h[i, j] = t
            denom = float(np.hypot(h[j, j], hj1))
            total += 1
            if denom == 0.0:
                # dead column: drop it and fall back to what we have
                breakdown = True
                j -= 1
                break
            cs[j], sn[j] = h[j, j] / denom, hj1 / denom
            h[j, j] = denom
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            rel = abs(g[j + 1]) / bnorm
            history.append(rel)
            if rel <= tol or total >= maxit:
                break
            if hj1 == 0.0:
                breakdown = True
                break
            v[j + 1] = w / hj1
        k = j + 1
        if k > 0:
            y = np.linalg.solve(np.triu(h[:k, :k]), g[:k])
            x = x + apply_m(v[:k].T @ y)
        r = b - a @ x
        beta = float(np.linalg.norm(r))
        rel = beta / bnorm
        history[-1] = rel
        if rel <= tol:
            converged = True
            break
        if total >= maxit or breakdown:
            break
    return x, SolveStats(total, rel, converged, history)
