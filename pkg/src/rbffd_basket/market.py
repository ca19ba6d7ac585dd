"""Two-asset Black-Scholes market model for a European basket call.

The option pays max((s1+s2)/2 - K, 0) at maturity. Working in time to
maturity tau = T - t, the price solves du/dtau = L u where L is the 2D
Black-Scholes operator. The close-field boundary (s1=s2=0) carries the
value 0 and the far-field diagonal s1+s2=s_max carries the deep
in-the-money asymptote (s1+s2)/2 - K*exp(-r*tau).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Market and contract parameters.

    r: risk-free rate, sigma1/sigma2: volatilities, rho: correlation,
    K: strike, T: maturity, s_max: far-field level (s1 + s2 = s_max).
    """

    r: float
    sigma1: float
    sigma2: float
    rho: float
    K: float
    T: float
    s_max: float

    def __post_init__(self) -> None:
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("volatilities must be positive")
        if abs(self.rho) > 1:
            raise ValueError("correlation must be in [-1, 1]")
        if self.K <= 0:
            raise ValueError("strike must be positive")
        if self.T <= 0:
            raise ValueError("maturity must be positive")
        if self.s_max <= self.K:
            raise ValueError("s_max must exceed the strike")


#: Parameters of the standard model problem (r=3%, sigma=15%, rho=0.5,
#: K=1, T=0.2 years, far field at 8K).
DEFAULT_PARAMS = ModelParams(r=0.03, sigma1=0.15, sigma2=0.15, rho=0.5,
                             K=1.0, T=0.2, s_max=8.0)


@dataclass(frozen=True)
class OperatorCoefficients:
    """Coefficients of the spatial operator at one point.

    L u = c11 u_11 + c22 u_22 + c12 u_12 + c1 u_1 + c2 u_2 + c0 u,
    with subscripts denoting partial derivatives in s1 and s2.
    """

    c11: float
    c22: float
    c12: float
    c1: float
    c2: float
    c0: float


def payoff(s1, s2, K: float):
    """Basket call payoff max((s1+s2)/2 - K, 0). Accepts arrays."""
    return np.maximum(0.5 * (np.asarray(s1) + np.asarray(s2)) - K, 0.0)


def operator_coefficients(s1: float, s2: float, p: ModelParams) -> OperatorCoefficients:
    """Black-Scholes operator coefficients at (s1, s2)."""
    return OperatorCoefficients(
        c11=0.5 * p.sigma1 ** 2 * s1 ** 2,
        c22=0.5 * p.sigma2 ** 2 * s2 ** 2,
        c12=p.rho * p.sigma1 * p.sigma2 * s1 * s2,
        c1=p.r * s1,
        c2=p.r * s2,
        c0=-p.r,
    )


def coefficient_arrays(s1, s2, p: ModelParams):
    """Vectorized operator coefficients, returned as (c11, c22, c12, c1, c2, c0)."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    c11 = 0.5 * p.sigma1 ** 2 * s1 ** 2
    c22 = 0.5 * p.sigma2 ** 2 * s2 ** 2
    c12 = p.rho * p.sigma1 * p.sigma2 * s1 * s2
    c1 = p.r * s1
    c2 = p.r * s2
    c0 = np.full_like(s1, -p.r)
    return c11, c22, c12, c1, c2, c0


def far_field_value(s1, s2, tau: float, p: ModelParams):
    """Deep in-the-money value (s1+s2)/2 - K*exp(-r*tau) on the far boundary."""
    return 0.5 * (np.asarray(s1) + np.asarray(s2)) - p.K * math.exp(-p.r * tau)


def close_field_value() -> float:
    """Value at the origin s1=s2=0: zero for all times."""
    return 0.0


def scale_problem(p: ModelParams) -> tuple[ModelParams, float]:
    """Rescale prices so the far field sits at s_max=1.

    Returns (scaled params, scale factor lam). Prices transform as
    u_orig(s, tau) = lam * u_scaled(s / lam, tau); rates, volatilities,
    correlation and maturity are scale invariant.
    """
    lam = p.s_max
    scaled = replace(p, K=p.K / lam, s_max=1.0)
    return scaled, lam


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def bs_call_1d(S: float, K: float, r: float, sigma: float, tau: float) -> float:
    """Black-Scholes value of a European call on a single asset.

    Serves as the closed-form oracle for the degenerate basket case
    rho=1, sigma1=sigma2, where (s1+s2)/2 is itself geometric Brownian
    motion with volatility sigma.
    """
    if tau < 0:
        raise ValueError("time to maturity must be nonnegative")
    if S <= 0.0:
        return 0.0
    if tau == 0.0:
        return max(S - K, 0.0)
    srt = sigma * math.sqrt(tau)
    d1 = (math.log(S / K) + (r + 0.5 * sigma ** 2) * tau) / srt
    d2 = d1 - srt
    return S * _norm_cdf(d1) - K * math.exp(-r * tau) * _norm_cdf(d2)
