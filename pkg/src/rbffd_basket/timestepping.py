"""Variable-step BDF2 integration with a constant coefficient matrix.

The semi-discrete system is du/dtau = W u. A backward Euler step of
length dt1 starts the recursion; every later step solves

    u_l - beta1 u_{l-1} + beta2 u_{l-2} = beta0 W u_l.

The step ratios omega_l = dt_l / dt_{l-1} are chosen so beta0 stays equal
to dt1 in every step, which keeps the system matrix A = I - dt1 W fixed:
one preconditioner serves the whole run. The first ratio is the golden
ratio; later ratios decrease monotonically toward 1 (classical BDF2).

Dirichlet nodes are handled by value injection: their W rows are zero, so
the corresponding rows of A are identity rows, and the right-hand side
carries the boundary value at the new time level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp

from .linsolve import GmresConfig, SolveStats, gmres, ilu0
from .market import ModelParams, close_field_value, far_field_value
from .nodes import NodeSet, Role


@dataclass(frozen=True)
class TimeGrid:
    """BDF2 step schedule over [0, T].

    dt[l-1] is the length of step l (l = 1..M); omega, beta1, beta2 are
    aligned to steps l >= 2 (index l-2); beta0 equals dt[0] for every
    step; tau[l] is the time reached after step l, tau[0] = 0.
    """

    dt: np.ndarray
    omega: np.ndarray
    beta0: float
    beta1: np.ndarray
    beta2: np.ndarray
    tau: np.ndarray

    @property
    def m(self) -> int:
        return self.dt.shape[0]


def bdf2_betas(dt: float, omega: float) -> tuple[float, float, float]:
    """BDF2 coefficients (beta0, beta1, beta2) for step length dt, ratio omega."""
    den = 1.0 + 2.0 * omega
    return (dt * (1.0 + omega) / den,
            (1.0 + omega) ** 2 / den,
            omega ** 2 / den)


def build_time_grid(m: int, t_end: float) -> TimeGrid:
    """Step schedule with constant beta0.

    Requiring beta0 of step l to match step l-1 makes each ratio the
    positive root of omega^2 + (1 - 2c) omega - c = 0 with
    c = (1 + omega_prev)/(1 + 2 omega_prev); matching the backward Euler
    step (beta0 = dt1) gives omega_2^2 - omega_2 - 1 = 0, the golden
    ratio. dt1 then follows from the steps summing to t_end.
    """
    if m < 1:
        raise ValueError("need at least one time step")
    if t_end <= 0:
        raise ValueError("horizon must be positive")
    if m == 1:
        return TimeGrid(dt=np.array([t_end]), omega=np.empty(0),
                        beta0=t_end, beta1=np.empty(0), beta2=np.empty(0),
                        tau=np.array([0.0, t_end]))
    omega = np.empty(m - 1)
    omega[0] = (1.0 + math.sqrt(5.0)) / 2.0
    for k in range(1, m - 1):
        c = (1.0 + omega[k - 1]) / (1.0 + 2.0 * omega[k - 1])
        omega[k] = 0.5 * ((2.0 * c - 1.0) + math.sqrt((2.0 * c - 1.0) ** 2 + 4.0 * c))
    growth = np.cumprod(omega)
    dt1 = t_end / (1.0 + growth.sum())
    dt = np.concatenate(([dt1], dt1 * growth))
    beta1 = (1.0 + omega) ** 2 / (1.0 + 2.0 * omega)
    beta2 = omega ** 2 / (1.0 + 2.0 * omega)
    tau = np.concatenate(([0.0], np.cumsum(dt)))
    return TimeGrid(dt=dt, omega=omega, beta0=dt1, beta1=beta1, beta2=beta2,
                    tau=tau)


def system_matrix(w: sp.spmatrix, grid: TimeGrid) -> sp.csr_matrix:
    """A = I - dt1 W. Zero W rows become identity rows."""
    n = w.shape[0]
    a = (sp.eye(n, format="csr") - grid.beta0 * w.tocsr()).tocsr()
    a.sort_indices()
    return a


@dataclass
class DirichletValues:
    """Indices of Dirichlet nodes and their values as a function of tau."""

    indices: np.ndarray
    value_fn: Callable[[float], np.ndarray]

    def values(self, tau: float) -> np.ndarray:
        return self.value_fn(tau)


def dirichlet_for(ns: NodeSet, model: ModelParams) -> DirichletValues:
    """Boundary values for the basket problem: zero at the origin corner,
    the discounted-strike asymptote on the far-field diagonal."""
    idx = np.nonzero(ns.dirichlet_mask)[0]
    corner = ns.roles[idx] == Role.CORNER
    s1 = ns.coords[idx, 0]
    s2 = ns.coords[idx, 1]

    def value_fn(tau: float) -> np.ndarray:
        vals = far_field_value(s1, s2, tau, model)
        vals = np.where(corner, close_field_value(), vals)
        return vals

    return DirichletValues(indices=idx, value_fn=value_fn)


def integrate(w: sp.spmatrix, u0: np.ndarray, grid: TimeGrid,
              dirichlet: DirichletValues | None = None,
              gmres_cfg: GmresConfig = GmresConfig(),
              solver: Literal["gmres", "direct"] = "gmres",
              trace_path=None,
              on_step: Callable[[int, float, np.ndarray], None] | None = None,
              ) -> tuple[np.ndarray, list[SolveStats]]:
    """Advance u' = W u from tau=0 to tau=T over the given step schedule.

    Solves A u_l = b_l each step with A = I - dt1 W: backward Euler for
    l=1 (b = u0), BDF2 afterwards (b = beta1 u_{l-1} - beta2 u_{l-2}).
    Dirichlet rows of b are overwritten with the boundary values at the
    new time level before each solve, and again after it in case the
    iterative solver perturbed them. Each solve warm-starts from the
    previous solution.
    """
    a = system_matrix(w, grid)
    if solver == "gmres":
        factors = ilu0(a)

        def solve(b, x0):
            return gmres(a, b, x0=x0, precond=factors, tol=gmres_cfg.tol,
                         restart=gmres_cfg.restart, maxit=gmres_cfg.maxit)
    elif solver == "direct":
        from scipy.sparse.linalg import splu

        lu = splu(a.tocsc())

        def solve(b, x0):
            return lu.solve(b), SolveStats(1, 0.0, True, [])
    else:
        raise ValueError(f"unknown solver {solver!r}")

    trace = open(trace_path, "w") if trace_path is not None else None
    stats_log: list[SolveStats] = []
    try:
        u_prev = np.asarray(u0, dtype=float).copy()
        u = u_prev
        for step in range(1, grid.m + 1):
            tau = float(grid.tau[step])
            if step == 1:
                b = u_prev.copy()
            else:
                b = grid.beta1[step - 2] * u - grid.beta2[step - 2] * u_prev
            if dirichlet is not None:
                bc = dirichlet.values(tau)
                b[dirichlet.indices] = bc
            u_new, stats = solve(b, u)
            if not stats.converged:
                raise RuntimeError(
                    f"linear solve failed at step {step}: "
                    f"residual {stats.residual:.3e} after {stats.iterations} iterations")
            if dirichlet is not None:
                u_new[dirichlet.indices] = bc
            u_prev, u = u, u_new
            stats_log.append(stats)
            if trace is not None:
                trace.write(f"{step} {tau:.12e} {stats.iterations} "
                            f"{stats.residual:.3e}\n")
            if on_step is not None:
                on_step(step, tau, u)
        return u, stats_log
    finally:
        if trace is not None:
            trace.close()
